//! Exit criteria of the toolkit. Each criterion prints one PASS/FAIL line;
//! the process fails if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix2, SymmetricEigen};
use num_complex::Complex64;
use polmem_cli::commands::{model_fidelity, probe_config, run_tomography, Characterization};
use polmem_cli::RunConfig;
use polmem_core::classical_bounds::{
    poisson_conditional_bound, quantumness_verdict, threshold_bound, transmitted_constrained_bound, Verdict,
};
use polmem_core::memory_model::{mu1, predicted_fidelity_from_mu1, validate_schedule};
use polmem_core::polarization::standard_state;
use polmem_core::reference;
use polmem_core::tomography::{apply_process, process_tomography, ProcessMatrix};
use polmem_core::{ExperimentConfig, MemoryParams, Polarization, StorageSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_140_521;

/// Storage sequences per analyzer setting that reproduce the quoted
/// per-mode fidelity errors (about 3.5 % per mode, 1.5 % for five modes).
const PUBLISHED_SCALE_TRIALS: u64 = 40_000;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    ok: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { ok: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.ok &= ok;
        self.lines.push(format!("    [{}] {what}", if ok { "ok" } else { "FAIL" }));
    }
}

/// `(F_c + μ₁/μ)/(1 + 2μ₁/μ)`, written out independently of the library.
fn eq4(mu: f64, mu1: f64, f_c: f64) -> f64 {
    (f_c + mu1 / mu) / (1.0 + 2.0 * mu1 / mu)
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let expected = [0.785, 0.847, 0.923, 0.959];
    for (row, want) in reference::FIDELITY_VS_MU.iter().zip(expected) {
        let mu = row.mu.value;
        let f = predicted_fidelity_from_mu1(mu, 0.29, 0.991).unwrap();
        o.check((f - eq4(mu, 0.29, 0.991)).abs() < 1e-12, format!("mu={mu}: model {f:.6} matches direct evaluation"));
        o.check((f - want).abs() <= 5e-4, format!("mu={mu}: model {f:.4} rounds to {want}"));
        let diff = (f - row.fidelity.value).abs();
        o.check(diff <= 0.02, format!("mu={mu}: |model - measured| = {:.2} pp <= 2 pp", 100.0 * diff));
        let a = eq4(mu, 0.25, 0.991);
        let b = eq4(mu, 0.33, 0.991);
        let (lo, hi) = (a.min(b), a.max(b));
        let inside = (lo..=hi).contains(&row.fidelity.value);
        o.check(inside, format!("mu={mu}: measured {} inside mu1 band [{lo:.4}, {hi:.4}]", row.fidelity.value));
    }
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let rows = reference::FIDELITY_VS_MU
        .iter()
        .map(|r| ("table1", r))
        .chain(reference::PER_MODE.iter().map(|r| ("per-mode", r)));
    for (table, r) in rows {
        let m = mu1(&MemoryParams::with_eta_pn(r.eta.value, r.p_n.value)).unwrap();
        let ok = (m - r.mu1.value).abs() <= r.mu1.err;
        o.check(ok, format!("{table} mu={}: p_n/eta = {m:.4} vs {} +/- {}", r.mu.value, r.mu1.value, r.mu1.err));
    }
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    for (i, row) in reference::FIDELITY_VS_MU.iter().enumerate() {
        let config = ExperimentConfig {
            input_state: standard_state(Polarization::D),
            mu_per_mode: row.mu.value,
            params: MemoryParams::with_eta_pn(row.eta.value, row.p_n.value),
            trials: 1_000_000,
            ..ExperimentConfig::default()
        };
        let ch = Characterization::run(&config, Polarization::D, SEED, 10 * i as u64).unwrap();
        let e = ch.estimate(&config).unwrap();
        let model = model_fidelity(&config, row.mu.value, &config.params).unwrap();
        let mu = row.mu.value;
        o.check(
            (e.eta_hat - row.eta.value).abs() <= 3.0 * e.eta_err,
            format!("mu={mu}: eta {:.5} +/- {:.5} vs {}", e.eta_hat, e.eta_err, row.eta.value),
        );
        o.check(
            (e.p_n_hat - row.p_n.value).abs() <= 3.0 * e.p_n_err,
            format!("mu={mu}: p_n {:.5} +/- {:.5} vs {}", e.p_n_hat, e.p_n_err, row.p_n.value),
        );
        o.check(
            (e.fidelity_hat - model).abs() <= 3.0 * e.fidelity_err,
            format!("mu={mu}: F {:.4} +/- {:.4} vs model {model:.4}", e.fidelity_hat, e.fidelity_err),
        );
    }
    o
}

fn random_channel(rng: &mut ChaCha8Rng) -> ProcessMatrix {
    let mut draw = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let kraus: Vec<Matrix2<Complex64>> = (0..4).map(|_| Matrix2::from_fn(|_, _| draw())).collect();
    let s: Matrix2<Complex64> = kraus.iter().map(|k| k.adjoint() * k).sum();
    let eig = SymmetricEigen::new(s);
    let inv_sqrt = eig.eigenvalues.map(|l| Complex64::new(1.0 / l.sqrt(), 0.0));
    let s_inv_sqrt = eig.eigenvectors * Matrix2::from_diagonal(&inv_sqrt) * eig.eigenvectors.adjoint();
    let normalized: Vec<_> = kraus.iter().map(|k| k * s_inv_sqrt).collect();
    ProcessMatrix::from_kraus(&normalized)
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let inputs: Vec<_> = Polarization::PROBE_INPUTS.iter().map(|&p| standard_state(p)).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let chi = random_channel(&mut rng);
        let outputs: Vec<_> = inputs.iter().map(|s| apply_process(&chi, s).unwrap().state).collect();
        let t = process_tomography(&inputs, &outputs).unwrap();
        worst = worst.max((t.raw - chi.matrix()).norm()).max((t.projected.matrix() - chi.matrix()).norm());
    }
    o.check(worst < 1e-6, format!("10 random CP-TP channels recovered, worst Frobenius error {worst:.2e}"));

    let cfg = RunConfig { seed: SEED, ..RunConfig::default() };
    let run = run_tomography(&cfg, PUBLISHED_SCALE_TRIALS, 200, 300).unwrap();
    let chi00 = run.process.projected.chi00();
    o.check((0.72..=0.80).contains(&chi00), format!("chi00 = {chi00:.4} in [0.72, 0.80]"));
    o.check(
        (chi00 - reference::CHI_00).abs() <= 3.0 * run.chi00_err,
        format!("chi00 = {chi00:.4} +/- {:.4} consistent with {}", run.chi00_err, reference::CHI_00),
    );
    for (s, row) in run.states.iter().zip(reference::PER_STATE.iter()) {
        let sigma = s.fidelity_err.hypot(row.fidelity.err);
        let sp = cfg.tomography.states.iter().find(|x| x.state == s.state).unwrap();
        let probe = probe_config(&cfg, sp, 1, 0);
        let model = model_fidelity(&probe, sp.mu, &probe.params).unwrap();
        o.check(
            (s.fidelity - row.fidelity.value).abs() <= 3.0 * sigma,
            format!(
                "{}: F = {:.4} +/- {:.4} (model {model:.4}) vs {} +/- {}",
                s.state, s.fidelity, s.fidelity_err, row.fidelity.value, row.fidelity.err
            ),
        );
    }
    o
}

/// Σ_{n=1}^{100} (n+1)/(n+2) P(μ, n) / (1 − e^{−μ}).
fn series_oracle(mu: f64) -> f64 {
    let mut p = (-mu).exp();
    let mut num = 0.0;
    for n in 1..=100 {
        p *= mu / n as f64;
        num += (n as f64 + 1.0) / (n as f64 + 2.0) * p;
    }
    num / (1.0 - (-mu).exp())
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let mut worst: f64 = 0.0;
    for i in 0..=400 {
        let mu = 10f64.powf(-3.0 + (20f64.log10() + 3.0) * i as f64 / 400.0);
        worst = worst.max((poisson_conditional_bound(mu).unwrap() - series_oracle(mu)).abs());
    }
    o.check(worst < 1e-10, format!("closed form vs 100-term series on [1e-3, 20]: max diff {worst:.2e}"));
    let at1 = poisson_conditional_bound(1.0).unwrap();
    o.check((at1 - 0.7090).abs() <= 1e-4, format!("mu=1: {at1:.6}"));
    let small = poisson_conditional_bound(1e-3).unwrap();
    o.check((small - 2.0 / 3.0).abs() <= 1e-3, format!("mu=1e-3: {small:.6}"));
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let cfg = RunConfig::default();
    let b = &cfg.bounds;
    let mus = b.grid.values().unwrap();
    let (mut plain_ok, mut trans_ok, mut floor_ok) = (true, true, true);
    for &mu in &mus {
        let plain = poisson_conditional_bound(mu).unwrap();
        let thr = threshold_bound(mu, b.eta_m).unwrap().bound_fidelity;
        let tr = transmitted_constrained_bound(mu, b.f_t, b.eta_t, b.eta_m).unwrap().bound_fidelity;
        plain_ok &= plain <= thr;
        trans_ok &= tr <= thr;
        floor_ok &= plain.min(thr).min(tr) >= 2.0 / 3.0;
    }
    let n = mus.len();
    o.check(plain_ok, format!("plain <= threshold at all {n} points of [{}, {}]", mus[0], mus[n - 1]));
    o.check(trans_ok, format!("transmitted <= threshold at all {n} points"));
    o.check(floor_ok, "all bounds >= 2/3".into());
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    for row in &reference::FIDELITY_VS_MU {
        let mu = row.mu.value;
        let bound =
            transmitted_constrained_bound(mu, reference::BOUND_F_T, reference::BOUND_ETA_T, reference::BOUND_ETA_M)
                .unwrap()
                .bound_fidelity;
        let want = if mu < 1.0 { Verdict::Inconclusive } else { Verdict::Quantum };
        let got = quantumness_verdict(row.fidelity.value, row.fidelity.err, bound);
        o.check(
            got == want,
            format!("mu={mu}: {} +/- {} vs bound {bound:.4} -> {}", row.fidelity.value, row.fidelity.err, got.as_str()),
        );
    }
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let r = validate_schedule(&StorageSchedule::default());
    o.check(
        r.is_valid() && (r.total_storage_us - 515.0).abs() < 1e-9,
        format!("defaults valid, total {} us", r.total_storage_us),
    );
    let crowded = StorageSchedule { n_modes: 9, ..StorageSchedule::default() };
    o.check(!validate_schedule(&crowded).is_valid(), "9 modes + control exceed the comb delay".into());
    let short = StorageSchedule { control_spacing_us: 400.0, ..StorageSchedule::default() };
    o.check(!validate_schedule(&short).is_valid(), "4 x 120 us RF pulses exceed 400 us spacing".into());
    o
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
        }
    }
    files
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let tmp = tempfile::tempdir().unwrap();
    let trees: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = tmp.path().join(name);
            let status = Command::new(env!("CARGO_BIN_EXE_polmem"))
                .args(["reproduce-paper", "--seed", "7", "--out"])
                .arg(&out)
                .output()
                .unwrap();
            (status.status.success(), read_tree(&out))
        })
        .collect();
    o.check(trees.iter().all(|t| t.0), "both runs exit successfully".into());
    let identical = trees[0].1 == trees[1].1 && !trees[0].1.is_empty();
    o.check(identical, format!("{} files byte-identical across runs", trees[0].1.len()));
    o
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("fidelity model vs measured table", criterion_1),
        ("mu1 consistency", criterion_2),
        ("Monte Carlo / estimator closure", criterion_3),
        ("tomography round trip", criterion_4),
        ("plain bound closed form", criterion_5),
        ("bound ordering", criterion_6),
        ("verdict reproduction", criterion_7),
        ("schedule validation", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let status = if outcome.ok { "PASS" } else { "FAIL" };
        println!("criterion {}: {status} {name} ({:.1} s)", i + 1, t.elapsed().as_secs_f64());
        for line in &outcome.lines {
            println!("{line}");
        }
        failed += usize::from(!outcome.ok);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
