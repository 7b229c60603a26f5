use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use polmem_core::classical_bounds::{self, quantumness_verdict_k, BoundCurvePoint};
use polmem_core::memory_model::{predicted_fidelity, predicted_fidelity_from_mu1};
use polmem_core::montecarlo::{
    derived_seed, effective_noise, estimate_params, noise_config, simulate_run, simulate_tomography,
};
use polmem_core::polarization::{fidelity, standard_state};
use polmem_core::tomography::{
    monte_carlo_errors, reconstruct_process, write_chi_csv, DensityMatrixEstimate, ProcessTomography, SettingCounts,
    TomographyData,
};
use polmem_core::{AnalysisSetting, ExperimentConfig, MemoryParams, ParamEstimate, Polarization, PolarizationState};

use crate::config::{MeasuredPoint, RunConfig, StateParams};
use crate::output::Output;
use crate::CliError;

/// Central value and band edges of the fidelity model for `μ₁ ± err`.
pub fn fidelity_band(mu: f64, mu1: f64, mu1_err: f64, f_c: f64) -> Result<(f64, f64, f64), CliError> {
    let central = predicted_fidelity_from_mu1(mu, mu1, f_c)?;
    let a = predicted_fidelity_from_mu1(mu, mu1 + mu1_err, f_c)?;
    let b = predicted_fidelity_from_mu1(mu, (mu1 - mu1_err).max(0.0), f_c)?;
    Ok((central, a.min(b), a.max(b)))
}

pub fn predict(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let p = &cfg.predict;
    let mus = p.grid.values()?;
    let rows = mus
        .iter()
        .map(|&mu| fidelity_band(mu, p.mu1, p.mu1_err, p.f_c).map(|b| (mu, b)))
        .collect::<Result<Vec<_>, _>>()?;
    let o = Output::create(out, "predict", cfg)?;
    o.csv("fidelity_curve.csv", |w| {
        writeln!(w, "mu,fidelity,fidelity_low,fidelity_high")?;
        for (mu, (c, lo, hi)) in &rows {
            writeln!(w, "{mu},{c},{lo},{hi}")?;
        }
        Ok(())
    })?;
    let mut r = format!("fidelity model, mu1 = {} +/- {}, F_c = {}\n", p.mu1, p.mu1_err, p.f_c);
    for (mu, (c, lo, hi)) in rows.iter().take(12) {
        writeln!(r, "  mu = {mu:8.4}  F = {c:.4}  [{lo:.4}, {hi:.4}]").unwrap();
    }
    if rows.len() > 12 {
        writeln!(r, "  ... {} rows in {}", rows.len(), o.dir().join("fidelity_curve.csv").display()).unwrap();
    }
    Ok(r)
}

/// Fidelity the model predicts for what the simulator measures: the noise
/// floor includes dark counts.
pub fn model_fidelity(config: &ExperimentConfig, mu: f64, params: &MemoryParams) -> Result<f64, CliError> {
    let eff = MemoryParams { p_n: effective_noise(config, params), ..*params };
    Ok(predicted_fidelity(mu, &eff)?)
}

/// One simulated characterization: parallel and orthogonal analyzer runs
/// plus a no-input run, seeds `base`, `base + 1`, `base + 2` derived from
/// the config seed.
pub struct Characterization {
    pub parallel: polmem_core::CountHistogram,
    pub orthogonal: polmem_core::CountHistogram,
    pub noise: polmem_core::CountHistogram,
}

impl Characterization {
    pub fn run(config: &ExperimentConfig, label: Polarization, seed: u64, base: u64) -> Result<Self, CliError> {
        let with_seed =
            |c: &ExperimentConfig, i: u64| ExperimentConfig { rng_seed: derived_seed(seed, base + i), ..c.clone() };
        let parallel = simulate_run(&with_seed(config, 0), &AnalysisSetting::new(label))?;
        let orthogonal = simulate_run(&with_seed(config, 1), &AnalysisSetting::new(label.orthogonal()))?;
        let noise = simulate_run(&with_seed(&noise_config(config), 2), &AnalysisSetting::new(label))?;
        Ok(Self { parallel, orthogonal, noise })
    }

    pub fn ports(&self) -> [polmem_core::CountHistogram; 2] {
        [self.parallel.clone(), self.orthogonal.clone()]
    }

    pub fn estimate(&self, config: &ExperimentConfig) -> Result<ParamEstimate, CliError> {
        Ok(estimate_params(&self.ports(), &self.noise, config)?)
    }
}

fn label_of(mu: f64) -> String {
    format!("mu{mu}")
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let base = cfg.experiment_config();
    let label = cfg.experiment.input_state;
    let mus = if cfg.experiment.mu.is_empty() { vec![cfg.experiment.mu_per_mode] } else { cfg.experiment.mu.clone() };
    let o = Output::create(out, "simulate", cfg)?;
    let mut rows = Vec::new();
    for (i, &mu) in mus.iter().enumerate() {
        let config = ExperimentConfig { mu_per_mode: mu, ..base.clone() };
        config.validate()?;
        let ch = Characterization::run(&config, label, cfg.seed, 3 * i as u64)?;
        for (h, name) in
            [(&ch.parallel, label.as_str()), (&ch.orthogonal, label.orthogonal().as_str()), (&ch.noise, "noise")]
        {
            o.csv(&format!("histogram_{}_{name}.csv", label_of(mu)), |w| h.write_csv(w))?;
        }
        let est = ch.estimate(&config)?;
        let model = if mu > 0.0 { model_fidelity(&config, mu, &config.params)? } else { f64::NAN };
        rows.push((mu, est, model));
    }
    o.csv("estimate.csv", |w| {
        writeln!(
            w,
            "mu,eta_hat,eta_err,p_n_hat,p_n_err,fidelity_hat,fidelity_err,fidelity_model,counts_parallel,counts_orthogonal,counts_noise"
        )?;
        for (mu, e, model) in &rows {
            writeln!(
                w,
                "{mu},{},{},{},{},{},{},{model},{},{},{}",
                e.eta_hat, e.eta_err, e.p_n_hat, e.p_n_err, e.fidelity_hat, e.fidelity_err, e.counts_parallel, e.counts_orthogonal, e.counts_noise
            )?;
        }
        Ok(())
    })?;
    let mut r = format!("{} trials per run, input {label}\n", base.trials);
    for (mu, e, model) in &rows {
        writeln!(
            r,
            "  mu = {mu}: eta = {:.4} +/- {:.4}, p_n = {:.5} +/- {:.5}, F = {:.4} +/- {:.4} (model {model:.4})",
            e.eta_hat, e.eta_err, e.p_n_hat, e.p_n_err, e.fidelity_hat, e.fidelity_err
        )
        .unwrap();
    }
    Ok(r)
}

/// Reads `setting,counts[,exposure[,background]]` rows; `#` lines and a
/// `setting` header are skipped.
pub fn read_count_file(path: &Path) -> Result<TomographyData, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let bad = |line: usize, msg: &str| CliError::Config(format!("{}:{line}: {msg}", path.display()));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("setting") {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() < 2 || f.len() > 4 {
            return Err(bad(i + 1, "expected setting,counts[,exposure[,background]]"));
        }
        let setting: Polarization = f[0].parse().map_err(|_| bad(i + 1, "unknown setting"))?;
        let counts: u64 = f[1].parse().map_err(|_| bad(i + 1, "counts must be a nonnegative integer"))?;
        let num = |k: usize, default: f64| -> Result<f64, CliError> {
            f.get(k).map_or(Ok(default), |s| s.parse().map_err(|_| bad(i + 1, "not a number")))
        };
        entries.push(SettingCounts {
            setting: AnalysisSetting::new(setting),
            counts,
            exposure: num(2, 1.0)?,
            background: num(3, 0.0)?,
        });
    }
    Ok(TomographyData::new(entries)?)
}

fn write_counts(data: &TomographyData, w: &mut Vec<u8>) -> std::io::Result<()> {
    writeln!(w, "setting,counts,exposure,background")?;
    for e in data.entries() {
        writeln!(w, "{},{},{},{}", e.setting.label(), e.counts, e.exposure, e.background)?;
    }
    Ok(())
}

/// Experiment settings for one probe state at its own parameters.
pub fn probe_config(cfg: &RunConfig, sp: &StateParams, trials: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        input_state: standard_state(sp.state),
        mu_per_mode: sp.mu,
        params: MemoryParams { eta: sp.eta, p_n: sp.p_n, ..cfg.memory },
        trials,
        rng_seed: seed,
        ..cfg.experiment_config()
    }
}

pub struct StateResult {
    pub state: Polarization,
    pub estimate: DensityMatrixEstimate,
    pub fidelity: f64,
    pub fidelity_err: f64,
    pub data: TomographyData,
}

pub struct TomographyRun {
    pub states: Vec<StateResult>,
    pub process: ProcessTomography,
    pub chi00_err: f64,
}

/// Reconstruction of the four probe states and the process. Counts come from
/// the configured files or are simulated with seeds `base + i`.
pub fn run_tomography(cfg: &RunConfig, trials: u64, resamples: usize, base: u64) -> Result<TomographyRun, CliError> {
    let t = &cfg.tomography;
    let settings: Vec<AnalysisSetting> = t.settings.iter().map(|&p| AnalysisSetting::new(p)).collect();
    let mut data = Vec::new();
    for (i, &p) in Polarization::PROBE_INPUTS.iter().enumerate() {
        let d = if t.count_files.is_empty() {
            let sp = t
                .states
                .iter()
                .find(|s| s.state == p)
                .ok_or_else(|| CliError::Config(format!("no parameters for input state {p}")))?;
            simulate_tomography(&probe_config(cfg, sp, trials, derived_seed(cfg.seed, base + i as u64)), &settings)?
        } else {
            let path =
                t.count_files.get(&p).ok_or_else(|| CliError::Config(format!("no count file for input state {p}")))?;
            read_count_file(path)?
        };
        data.push(d);
    }
    let inputs: Vec<PolarizationState> = Polarization::PROBE_INPUTS.iter().map(|&p| standard_state(p)).collect();
    let (estimates, process) = reconstruct_process(&inputs, &data)?;
    let mut states = Vec::new();
    for (i, (est, d)) in estimates.into_iter().zip(data).enumerate() {
        let target = &inputs[i];
        let errs = monte_carlo_errors(&d, target, resamples, derived_seed(cfg.seed, base + 100 + i as u64))?;
        states.push(StateResult {
            state: Polarization::PROBE_INPUTS[i],
            fidelity: fidelity(&est.rho_hat, target),
            fidelity_err: errs.fidelity_std,
            estimate: est,
            data: d,
        });
    }
    let all: Vec<TomographyData> = states.iter().map(|s| s.data.clone()).collect();
    let pe = polmem_core::tomography::process_errors(&inputs, &all, resamples, derived_seed(cfg.seed, base + 200))?;
    Ok(TomographyRun { states, process, chi00_err: pe.chi00_std })
}

pub(crate) fn write_tomography(o: &Output, run: &TomographyRun, prefix: &str) -> Result<(), CliError> {
    o.csv(&format!("{prefix}states.csv"), |w| {
        writeln!(w, "state,fidelity,fidelity_err,purity,bloch_x,bloch_y,bloch_z,converged,low_rank,total_counts")?;
        for s in &run.states {
            let b = s.estimate.rho_hat.bloch();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.state,
                s.fidelity,
                s.fidelity_err,
                s.estimate.rho_hat.purity(),
                b[0],
                b[1],
                b[2],
                s.estimate.converged,
                s.estimate.low_rank,
                s.data.total_counts()
            )?;
        }
        Ok(())
    })?;
    o.csv(&format!("{prefix}chi_raw.csv"), |w| write_chi_csv(&run.process.raw, false, w))?;
    o.csv(&format!("{prefix}chi_projected.csv"), |w| write_chi_csv(run.process.projected.matrix(), true, w))?;
    o.csv(&format!("{prefix}process.csv"), |w| {
        writeln!(w, "chi00_raw,chi00_projected,chi00_err,tp_deviation,min_eigenvalue,projection_iterations,projection_converged")?;
        let p = &run.process;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.raw[(0, 0)].re,
            p.projected.chi00(),
            run.chi00_err,
            p.projected.tp_deviation(),
            p.projected.min_eigenvalue(),
            p.projection_iterations,
            p.projection_converged
        )
    })?;
    Ok(())
}

pub fn tomography(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let run = run_tomography(cfg, cfg.tomography.trials, cfg.tomography.resamples, 0)?;
    let o = Output::create(out, "tomography", cfg)?;
    for s in &run.states {
        o.csv(&format!("counts_{}.csv", s.state), |w| write_counts(&s.data, w))?;
    }
    write_tomography(&o, &run, "")?;
    let mut r = String::from("state  fidelity\n");
    for s in &run.states {
        writeln!(r, "  {}    {:.4} +/- {:.4}", s.state, s.fidelity, s.fidelity_err).unwrap();
    }
    writeln!(
        r,
        "chi00 = {:.4} +/- {:.4} (raw {:.4})",
        run.process.projected.chi00(),
        run.chi00_err,
        run.process.raw[(0, 0)].re
    )
    .unwrap();
    Ok(r)
}

pub struct VerdictRow {
    pub point: MeasuredPoint,
    pub bound: f64,
    pub verdict: classical_bounds::Verdict,
}

pub fn verdicts(cfg: &RunConfig) -> Result<Vec<VerdictRow>, CliError> {
    let b = &cfg.bounds;
    b.measured
        .iter()
        .map(|&point| {
            let bound =
                classical_bounds::transmitted_constrained_bound_with(point.mu, b.f_t, b.eta_t, b.eta_m, &b.search)?
                    .bound_fidelity;
            Ok(VerdictRow { point, bound, verdict: quantumness_verdict_k(point.fidelity, point.err, bound, b.k) })
        })
        .collect()
}

pub fn bound_curve(cfg: &RunConfig) -> Result<Vec<BoundCurvePoint>, CliError> {
    let b = &cfg.bounds;
    Ok(classical_bounds::bound_curve(&b.grid.values()?, b.f_t, b.eta_t, b.eta_m, &b.search)?)
}

pub(crate) fn write_verdicts(o: &Output, name: &str, rows: &[VerdictRow], k: f64) -> Result<(), CliError> {
    o.csv(name, |w| {
        writeln!(w, "mu,measured_fidelity,measured_err,k,transmitted_bound,verdict")?;
        for v in rows {
            writeln!(w, "{},{},{},{k},{},{}", v.point.mu, v.point.fidelity, v.point.err, v.bound, v.verdict.as_str())?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn bounds(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let curve = bound_curve(cfg)?;
    let rows = verdicts(cfg)?;
    let o = Output::create(out, "bounds", cfg)?;
    o.csv("bounds.csv", |w| classical_bounds::write_bound_csv(&curve, w))?;
    write_verdicts(&o, "verdicts.csv", &rows, cfg.bounds.k)?;
    let mut r = String::from("   mu   measured        bound   verdict\n");
    for v in &rows {
        writeln!(
            r,
            "{:5}   {:.4} +/- {:.4}   {:.4}   {}",
            v.point.mu,
            v.point.fidelity,
            v.point.err,
            v.bound,
            v.verdict.as_str()
        )
        .unwrap();
    }
    Ok(r)
}
