//! Photon-counting simulation of the storage-and-detection sequence.
//!
//! Every storage sequence (trial) sends `n_modes` weak coherent pulses. For
//! each mode the transmitted light is detected in the input window and the
//! retrieved light plus the memory noise floor in the output window, all as
//! independent Poisson variables. The retrieved polarization is the input
//! sent through a depolarizing channel of fidelity `f_c`, the transmitted one
//! through a depolarizing channel of fidelity `f_t`; the noise floor is
//! unpolarized. Control-pulse windows are gated off.
//!
//! Trials are split into fixed-size blocks, each with its own ChaCha stream
//! derived from `(rng_seed, block index)`, so results do not depend on the
//! number of worker threads.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{check_probability, Error, Result};
use crate::memory_model::{validate_schedule, MemoryParams, StorageSchedule, Window, WindowKind};
use crate::polarization::{expectation, standard_state, AnalysisSetting, Mat2, Polarization, PolarizationState};
use crate::reference;
use crate::tomography::{SettingCounts, TomographyData};

const BLOCK_TRIALS: u64 = 1 << 14;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub input_state: PolarizationState,
    /// Mean photon number per mode at the memory input.
    pub mu_per_mode: f64,
    pub schedule: StorageSchedule,
    pub params: MemoryParams,
    /// Per-mode parameters; empty means every mode uses `params`.
    pub mode_params: Vec<MemoryParams>,
    /// Per-mode mean photon numbers; empty means every mode uses `mu_per_mode`.
    pub mode_mu: Vec<f64>,
    pub detector_efficiency: f64,
    pub dark_rate_hz: f64,
    pub transmission_to_detector: f64,
    pub bin_width_us: f64,
    /// Detector gate per output mode window used for the dark-count
    /// contribution. `None` means one mode duration.
    pub gate_width_us: Option<f64>,
    /// Fraction of `p_n` reaching one analyzer port. With 1.0 the noise floor
    /// is the per-port value that enters `S_max` and `S_min` alike.
    pub noise_port_fraction: f64,
    /// Residual polarization-dependent efficiency (H/V axis).
    pub anisotropy: bool,
    /// Mean control-pulse leakage counts per trial in the CP2 window, for
    /// display only.
    pub cp2_leakage: f64,
    pub spin_linewidth_hz: f64,
    /// Optional exponential decay constant of the refocused spin coherence.
    pub t2_dd_us: Option<f64>,
    pub trials: u64,
    pub rng_seed: u64,
    /// Keep the per-trial total of output-window counts.
    pub record_trials: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input_state: standard_state(Polarization::D),
            mu_per_mode: 1.4,
            schedule: StorageSchedule::default(),
            params: MemoryParams::default(),
            mode_params: Vec::new(),
            mode_mu: Vec::new(),
            detector_efficiency: reference::DETECTOR_EFFICIENCY,
            dark_rate_hz: reference::DARK_RATE_HZ,
            transmission_to_detector: reference::TRANSMISSION_TO_DETECTOR,
            bin_width_us: 1.25,
            gate_width_us: None,
            noise_port_fraction: 1.0,
            anisotropy: false,
            cp2_leakage: 0.0,
            spin_linewidth_hz: reference::SPIN_LINEWIDTH_HZ,
            t2_dd_us: None,
            trials: 100_000,
            rng_seed: 0,
            record_trials: false,
        }
    }
}

impl ExperimentConfig {
    /// Overall detection probability of a photon leaving the memory.
    pub fn detection_efficiency(&self) -> f64 {
        self.transmission_to_detector * self.detector_efficiency
    }

    pub fn gate_width(&self) -> f64 {
        self.gate_width_us.unwrap_or(self.schedule.mode_duration_us)
    }

    /// Mean dark counts in one output mode window.
    pub fn dark_per_mode(&self) -> f64 {
        self.dark_rate_hz * self.gate_width() * 1e-6
    }

    pub fn mode_params(&self, m: usize) -> &MemoryParams {
        self.mode_params.get(m).unwrap_or(&self.params)
    }

    pub fn mode_mu(&self, m: usize) -> f64 {
        self.mode_mu.get(m).copied().unwrap_or(self.mu_per_mode)
    }

    /// Mean photon number averaged over modes.
    pub fn mean_mu(&self) -> f64 {
        let n = self.schedule.n_modes as usize;
        (0..n).map(|m| self.mode_mu(m)).sum::<f64>() / n as f64
    }

    pub fn validate(&self) -> Result<()> {
        let report = validate_schedule(&self.schedule);
        if !report.is_valid() {
            return Err(Error::Config(report.violations.join("; ")));
        }
        for w in self.schedule.windows() {
            if !(w.width_us() > 0.0) {
                return Err(Error::Config(format!("{} window has zero length", w.kind.as_str())));
            }
        }
        let n = self.schedule.n_modes as usize;
        if !self.mode_params.is_empty() && self.mode_params.len() != n {
            return Err(Error::Config(format!("{} mode params for {n} modes", self.mode_params.len())));
        }
        if !self.mode_mu.is_empty() && self.mode_mu.len() != n {
            return Err(Error::Config(format!("{} mode photon numbers for {n} modes", self.mode_mu.len())));
        }
        let cfg = |e: Error| Error::Config(e.to_string());
        self.params.validate().map_err(cfg)?;
        for p in &self.mode_params {
            p.validate().map_err(cfg)?;
        }
        for mu in std::iter::once(self.mu_per_mode).chain(self.mode_mu.iter().copied()) {
            if !(mu >= 0.0) || !mu.is_finite() {
                return Err(Error::Config(format!("mean photon number {mu} must be >= 0")));
            }
        }
        check_probability("detector_efficiency", self.detector_efficiency).map_err(cfg)?;
        check_probability("transmission_to_detector", self.transmission_to_detector).map_err(cfg)?;
        check_probability("noise_port_fraction", self.noise_port_fraction).map_err(cfg)?;
        if !(self.dark_rate_hz >= 0.0) || !(self.cp2_leakage >= 0.0) {
            return Err(Error::Config("dark rate and leakage must be nonnegative".into()));
        }
        if !(self.gate_width() > 0.0) {
            return Err(Error::Config("gate width must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.bin_width_us > 0.0) {
            return Err(Error::Config("bin width must be positive".into()));
        }
        let ratio = self.schedule.mode_duration_us / self.bin_width_us;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::Config(format!(
                "bin width {} us does not divide mode duration {} us",
                self.bin_width_us, self.schedule.mode_duration_us
            )));
        }
        Ok(())
    }
}

/// Readout efficiency factor from spin dephasing. The XY-4 sequence is taken
/// to refocus the inhomogeneous broadening completely; an optional
/// exponential envelope `exp(−T_S / t2_dd)` accounts for residual decay.
pub fn spin_decay_factor(schedule: &StorageSchedule, linewidth_hz: f64, t2_dd_us: Option<f64>) -> f64 {
    debug_assert!(linewidth_hz >= 0.0);
    match t2_dd_us {
        Some(t2) if t2 > 0.0 => (-schedule.control_spacing_us / t2).exp(),
        Some(_) => 0.0,
        None => 1.0,
    }
}

/// `(2F − 1) ρ + (1 − F) I`: maps a pure `ψ` to `F ψψ† + (1 − F) ψ⊥ψ⊥†`.
fn depolarize(rho: &PolarizationState, f: f64) -> Mat2 {
    rho.matrix().scale(2.0 * f - 1.0) + Mat2::identity().scale(1.0 - f)
}

/// Mean detected counts per trial and mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeRates {
    /// Transmitted light in the input window.
    pub input: Vec<f64>,
    /// Retrieved signal + noise floor + dark counts in the output window.
    pub output: Vec<f64>,
    /// The noise-floor and dark part of `output`.
    pub output_background: Vec<f64>,
}

pub fn expected_mode_rates(config: &ExperimentConfig, analysis: &AnalysisSetting) -> ModeRates {
    let t_det = config.detection_efficiency();
    let decay = spin_decay_factor(&config.schedule, config.spin_linewidth_hz, config.t2_dd_us);
    let dark = config.dark_per_mode();
    let n = config.schedule.n_modes as usize;
    let mut rates = ModeRates {
        input: Vec::with_capacity(n),
        output: Vec::with_capacity(n),
        output_background: Vec::with_capacity(n),
    };
    for m in 0..n {
        let p = config.mode_params(m);
        let mu = config.mode_mu(m);
        let retrieved = depolarize(&config.input_state, p.f_c);
        let transmitted = depolarize(&config.input_state, p.f_t);
        let proj = analysis.projector();
        let p_out = (retrieved * proj).trace().re;
        let p_tr = (transmitted * proj).trace().re;
        let eta = p.efficiency_for(&config.input_state, config.anisotropy) * decay;
        let background = config.noise_port_fraction * p.p_n * t_det + dark;
        rates.input.push(mu * p.eta_t * p_tr * t_det);
        rates.output.push(mu * eta * p_out * t_det + background);
        rates.output_background.push(background);
    }
    rates
}

/// Time-binned counts accumulated over trials for one analyzer setting.
#[derive(Clone, Debug, PartialEq)]
pub struct CountHistogram {
    pub bin_edges_us: Vec<f64>,
    pub counts: Vec<u64>,
    pub analysis: AnalysisSetting,
    pub windows: Vec<Window>,
    pub n_modes: u32,
    pub mode_duration_us: f64,
    pub trials: u64,
    /// Output-window total per trial, when recorded.
    pub per_trial_output: Option<Vec<u32>>,
}

impl CountHistogram {
    fn empty(config: &ExperimentConfig, analysis: &AnalysisSetting) -> Self {
        let windows = config.schedule.windows().to_vec();
        let end = windows.iter().map(|w| w.end_us).fold(0.0, f64::max) + 2.0 * config.schedule.mode_duration_us;
        let n_bins = (end / config.bin_width_us).ceil() as usize;
        let bin_edges_us = (0..=n_bins).map(|i| i as f64 * config.bin_width_us).collect();
        Self {
            bin_edges_us,
            counts: vec![0; n_bins],
            analysis: analysis.clone(),
            windows,
            n_modes: config.schedule.n_modes,
            mode_duration_us: config.schedule.mode_duration_us,
            trials: 0,
            per_trial_output: config.record_trials.then(Vec::new),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn window(&self, kind: WindowKind) -> Option<&Window> {
        self.windows.iter().find(|w| w.kind == kind)
    }

    /// Window containing the start of bin `i`.
    pub fn bin_window(&self, i: usize) -> Option<WindowKind> {
        let t = self.bin_edges_us[i] + 1e-9;
        self.windows.iter().find(|w| w.contains(t)).map(|w| w.kind)
    }

    fn bins_in(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let w = self.bin_edges_us[1] - self.bin_edges_us[0];
        let lo = ((start / w) + 1e-9).floor() as usize;
        let hi = ((end / w) - 1e-9).ceil() as usize;
        lo.min(self.n_bins())..hi.min(self.n_bins())
    }

    pub fn window_counts(&self, kind: WindowKind) -> u64 {
        self.window(kind).map_or(0, |w| self.counts[self.bins_in(w.start_us, w.end_us)].iter().sum())
    }

    /// Counts of temporal mode `m` inside the input or output window.
    pub fn mode_counts(&self, kind: WindowKind, m: u32) -> u64 {
        let Some(w) = self.window(kind) else { return 0 };
        let start = w.start_us + f64::from(m) * self.mode_duration_us;
        self.counts[self.bins_in(start, start + self.mode_duration_us)].iter().sum()
    }

    /// Adds another histogram recorded with the same binning and analyzer.
    pub fn merge(&mut self, other: &CountHistogram) -> Result<()> {
        if self.bin_edges_us != other.bin_edges_us || self.analysis != other.analysis {
            return Err(Error::InvalidInput("histograms have different binning or analyzer".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.trials += other.trials;
        match (&mut self.per_trial_output, &other.per_trial_output) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            _ => self.per_trial_output = None,
        }
        Ok(())
    }

    /// CSV with columns `bin_start_us,bin_end_us,counts,window_label,analysis_label`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_start_us,bin_end_us,counts,window_label,analysis_label")?;
        for (i, n) in self.counts.iter().enumerate() {
            let label = self.bin_window(i).map_or("none", WindowKind::as_str);
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_time(self.bin_edges_us[i]),
                fmt_time(self.bin_edges_us[i + 1]),
                n,
                label,
                self.analysis.label()
            )?;
        }
        Ok(())
    }
}

fn fmt_time(t: f64) -> String {
    format!("{:.6}", t).trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Precomputed per-bin sampling plan for one run.
struct Plan {
    /// (first bin, bins per mode, Poisson) per mode and window.
    sources: Vec<(usize, usize, Option<Poisson<f64>>)>,
    output_sources: std::ops::Range<usize>,
    /// Bins that only see dark counts, and the Poisson for their total.
    dark_bins: Vec<usize>,
    dark: Option<Poisson<f64>>,
    leak_bins: std::ops::Range<usize>,
    leak: Option<Poisson<f64>>,
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    (mean > 0.0).then(|| Poisson::new(mean).expect("positive finite mean"))
}

fn build_plan(config: &ExperimentConfig, analysis: &AnalysisSetting, hist: &CountHistogram) -> Plan {
    let rates = expected_mode_rates(config, analysis);
    let per_mode = (config.schedule.mode_duration_us / config.bin_width_us).round() as usize;
    let mut sources = Vec::new();
    let mut signal = vec![false; hist.n_bins()];
    let mut blanked = vec![false; hist.n_bins()];
    for (kind, means) in [(WindowKind::Input, &rates.input), (WindowKind::Output, &rates.output)] {
        let w = hist.window(kind).expect("window present");
        for (m, &mean) in means.iter().enumerate() {
            let start = w.start_us + config.schedule.mode_offset_us(m as u32);
            let first = hist.bins_in(start, start + config.schedule.mode_duration_us).start;
            signal[first..first + per_mode].iter_mut().for_each(|b| *b = true);
            // The input window also sees darks; the output mean already has them.
            let mean = if kind == WindowKind::Input { mean + config.dark_per_mode() } else { mean };
            sources.push((first, per_mode, poisson(mean)));
        }
    }
    let n = config.schedule.n_modes as usize;
    for kind in [WindowKind::Cp1, WindowKind::Cp2] {
        let w = hist.window(kind).expect("window present");
        for i in hist.bins_in(w.start_us, w.end_us) {
            blanked[i] = true;
        }
    }
    let dark_bins: Vec<usize> = (0..hist.n_bins()).filter(|&i| !signal[i] && !blanked[i]).collect();
    let bin_dark = config.dark_rate_hz * config.bin_width_us * 1e-6;
    let cp2 = hist.window(WindowKind::Cp2).expect("window present");
    Plan {
        sources,
        output_sources: n..2 * n,
        dark: poisson(bin_dark * dark_bins.len() as f64),
        dark_bins,
        leak_bins: hist.bins_in(cp2.start_us, cp2.end_us),
        leak: poisson(config.cp2_leakage),
    }
}

fn simulate_block(plan: &Plan, hist: &mut CountHistogram, seed: u64, block: u64, trials: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    for _ in 0..trials {
        let mut out_total = 0u32;
        for (j, (first, width, dist)) in plan.sources.iter().enumerate() {
            let Some(d) = dist else { continue };
            let k = d.sample(&mut rng) as u64;
            for _ in 0..k {
                let bin = if *width == 1 { *first } else { first + rng.random_range(0..*width) };
                hist.counts[bin] += 1;
            }
            if plan.output_sources.contains(&j) {
                out_total += k as u32;
            }
        }
        if let Some(d) = &plan.dark {
            let k = d.sample(&mut rng) as u64;
            for _ in 0..k {
                let bin = plan.dark_bins[rng.random_range(0..plan.dark_bins.len())];
                hist.counts[bin] += 1;
            }
        }
        if let Some(d) = &plan.leak {
            let k = d.sample(&mut rng) as u64;
            let span = plan.leak_bins.len();
            for _ in 0..k {
                // Leakage appears at the falling edge of the gate.
                let bin = plan.leak_bins.start + span - 1 - rng.random_range(0..span.min(2));
                hist.counts[bin] += 1;
            }
        }
        if let Some(v) = hist.per_trial_output.as_mut() {
            v.push(out_total);
        }
    }
    hist.trials += trials;
}

/// Runs `config.trials` storage sequences detected behind `analysis`.
pub fn simulate_run(config: &ExperimentConfig, analysis: &AnalysisSetting) -> Result<CountHistogram> {
    config.validate()?;
    let template = CountHistogram::empty(config, analysis);
    let plan = build_plan(config, analysis, &template);
    let n_blocks = config.trials.div_ceil(BLOCK_TRIALS);
    let blocks: Vec<CountHistogram> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut h = template.clone();
            let trials = BLOCK_TRIALS.min(config.trials - b * BLOCK_TRIALS);
            simulate_block(&plan, &mut h, config.rng_seed, b, trials);
            h
        })
        .collect();
    let mut total = template;
    for b in &blocks {
        total.merge(b)?;
    }
    Ok(total)
}

/// Seed for the `index`-th independent run derived from one base seed.
pub fn derived_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add((index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Output-window counts behind each analyzer setting, one independent run
/// per setting, as raw tomography data (exposure = trials, no background
/// subtraction, so the noise floor stays part of the reconstructed state).
pub fn simulate_tomography(config: &ExperimentConfig, settings: &[AnalysisSetting]) -> Result<TomographyData> {
    let entries = settings
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let run = ExperimentConfig {
                rng_seed: derived_seed(config.rng_seed, i as u64),
                record_trials: false,
                ..config.clone()
            };
            let h = simulate_run(&run, s)?;
            Ok(SettingCounts {
                setting: s.clone(),
                counts: h.window_counts(WindowKind::Output),
                exposure: h.trials as f64,
                background: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TomographyData::new(entries)
}

/// Same configuration with the input switched off: the unconditional noise
/// floor measurement.
pub fn noise_config(config: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig { mu_per_mode: 0.0, mode_mu: vec![0.0; config.mode_mu.len()], ..config.clone() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEstimate {
    pub eta_hat: f64,
    pub eta_err: f64,
    pub p_n_hat: f64,
    pub p_n_err: f64,
    pub fidelity_hat: f64,
    pub fidelity_err: f64,
    pub counts_parallel: u64,
    pub counts_orthogonal: u64,
    pub counts_noise: u64,
}

fn find_port<'a>(hists: &'a [CountHistogram], state: &PolarizationState, want: f64) -> Option<&'a CountHistogram> {
    hists.iter().find(|h| (expectation(state, &h.analysis) - want).abs() < 1e-9)
}

/// Conditional fidelity `a/(a+b)` of trial-normalized parallel and orthogonal
/// counts with its Poisson-propagated error.
pub fn conditional_fidelity(n_par: u64, t_par: u64, n_orth: u64, t_orth: u64) -> Result<(f64, f64)> {
    if n_par + n_orth == 0 {
        return Err(Error::Estimation("no counts in the output window".into()));
    }
    let (tp, to) = (t_par as f64, t_orth as f64);
    let a = n_par as f64 / tp;
    let b = n_orth as f64 / to;
    let var_a = n_par as f64 / (tp * tp);
    let var_b = n_orth as f64 / (to * to);
    let s = a + b;
    let f = a / s;
    let err = ((b * b * var_a + a * a * var_b) / s.powi(4)).sqrt();
    Ok((f, err))
}

/// Estimates efficiency, noise floor and conditional fidelity from output
/// windows of the parallel and orthogonal analyzer runs plus a no-input run.
/// Counts of all modes are summed.
pub fn estimate_params(
    histograms: &[CountHistogram],
    noise_run: &CountHistogram,
    config: &ExperimentConfig,
) -> Result<ParamEstimate> {
    let (par, orth) = ports(histograms, config)?;
    let n_par = par.window_counts(WindowKind::Output);
    let n_orth = orth.window_counts(WindowKind::Output);
    let n_noise = noise_run.window_counts(WindowKind::Output);
    let counts = WindowCounts { par: n_par, orth: n_orth, noise: n_noise, modes: f64::from(config.schedule.n_modes) };
    estimate_from_counts(
        &counts,
        par.trials,
        orth.trials,
        noise_run.trials,
        config.mean_mu(),
        config.params.eta,
        config,
    )
}

/// Same as [`estimate_params`] restricted to output mode `m` (0-based), using
/// that mode's photon number and parameters.
pub fn estimate_mode_params(
    histograms: &[CountHistogram],
    noise_run: &CountHistogram,
    config: &ExperimentConfig,
    m: u32,
) -> Result<ParamEstimate> {
    if m >= config.schedule.n_modes {
        return Err(Error::InvalidInput(format!("mode {m} out of range")));
    }
    let (par, orth) = ports(histograms, config)?;
    let counts = WindowCounts {
        par: par.mode_counts(WindowKind::Output, m),
        orth: orth.mode_counts(WindowKind::Output, m),
        noise: noise_run.mode_counts(WindowKind::Output, m),
        modes: 1.0,
    };
    let eta = config.mode_params(m as usize).eta;
    estimate_from_counts(&counts, par.trials, orth.trials, noise_run.trials, config.mode_mu(m as usize), eta, config)
}

fn ports<'a>(
    histograms: &'a [CountHistogram],
    config: &ExperimentConfig,
) -> Result<(&'a CountHistogram, &'a CountHistogram)> {
    let state = &config.input_state;
    let par = find_port(histograms, state, 1.0)
        .ok_or_else(|| Error::InvalidInput("no analyzer parallel to the input state".into()))?;
    let orth = find_port(histograms, state, 0.0)
        .ok_or_else(|| Error::InvalidInput("no analyzer orthogonal to the input state".into()))?;
    Ok((par, orth))
}

struct WindowCounts {
    par: u64,
    orth: u64,
    noise: u64,
    /// Number of mode windows the counts are summed over.
    modes: f64,
}

fn estimate_from_counts(
    c: &WindowCounts,
    t_par: u64,
    t_orth: u64,
    t_noise: u64,
    mu: f64,
    eta_nominal: f64,
    config: &ExperimentConfig,
) -> Result<ParamEstimate> {
    let (n_par, n_orth, n_noise) = (c.par, c.orth, c.noise);
    let (fidelity_hat, fidelity_err) = conditional_fidelity(n_par, t_par, n_orth, t_orth)?;

    let t_det = config.detection_efficiency();
    let tn = t_noise as f64 * c.modes;
    if !(tn > 0.0) {
        return Err(Error::Estimation("empty noise run".into()));
    }
    let floor = n_noise as f64 / tn;
    let port = config.noise_port_fraction * t_det;
    if !(port > 0.0) {
        return Err(Error::Estimation("zero detection efficiency".into()));
    }
    let p_n_hat = ((floor - config.dark_per_mode()) / port).clamp(0.0, 1.0);
    let p_n_err = (n_noise as f64).sqrt() / tn / port;

    let tp = t_par as f64 * c.modes;
    let to = t_orth as f64 * c.modes;
    let signal = n_par as f64 / tp + n_orth as f64 / to - 2.0 * floor;
    let signal_var = n_par as f64 / (tp * tp) + n_orth as f64 / (to * to) + 4.0 * n_noise as f64 / (tn * tn);
    let decay = spin_decay_factor(&config.schedule, config.spin_linewidth_hz, config.t2_dd_us);
    let aniso = if config.anisotropy && eta_nominal > 0.0 {
        MemoryParams { eta: eta_nominal, ..config.params }.efficiency_for(&config.input_state, true) / eta_nominal
    } else {
        1.0
    };
    let scale = mu * t_det * decay * aniso;
    if !(scale > 0.0) {
        return Err(Error::Estimation("no input light: efficiency is not identifiable".into()));
    }
    Ok(ParamEstimate {
        eta_hat: (signal / scale).clamp(0.0, 1.0),
        eta_err: signal_var.sqrt() / scale,
        p_n_hat,
        p_n_err,
        fidelity_hat,
        fidelity_err,
        counts_parallel: n_par,
        counts_orthogonal: n_orth,
        counts_noise: n_noise,
    })
}

/// Noise floor per port referred to the memory output, dark counts
/// included: the `p_n` that the fidelity model sees.
pub fn effective_noise(config: &ExperimentConfig, params: &MemoryParams) -> f64 {
    let t_det = config.detection_efficiency();
    config.noise_port_fraction * params.p_n + if t_det > 0.0 { config.dark_per_mode() / t_det } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(trials: u64) -> ExperimentConfig {
        ExperimentConfig { trials, rng_seed: 7, ..ExperimentConfig::default() }
    }

    #[test]
    fn dark_free_noise_free_vacuum_gives_nothing() {
        let c = ExperimentConfig {
            mu_per_mode: 0.0,
            params: MemoryParams { p_n: 0.0, ..MemoryParams::default() },
            dark_rate_hz: 0.0,
            ..cfg(5000)
        };
        let h = simulate_run(&c, &AnalysisSetting::new(Polarization::D)).unwrap();
        assert!(h.counts.iter().all(|&n| n == 0));
        assert_eq!(h.trials, 5000);
    }

    #[test]
    fn noise_floor_rate_matches_closed_form() {
        let half = ExperimentConfig {
            mu_per_mode: 0.0,
            params: MemoryParams::with_eta_pn(0.036, 0.0101),
            dark_rate_hz: 0.0,
            noise_port_fraction: 0.5,
            ..cfg(10)
        };
        let r = expected_mode_rates(&half, &AnalysisSetting::new(Polarization::D));
        let want = 0.0101 * 0.5 * 0.07 * 0.57;
        assert!(r.output.iter().all(|&x| (x - want).abs() < 1e-15));
        assert!(r.input.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn control_pulse_windows_are_blanked() {
        let c = ExperimentConfig { dark_rate_hz: 5e4, ..cfg(20_000) };
        let h = simulate_run(&c, &AnalysisSetting::new(Polarization::D)).unwrap();
        let cp1 = h.window(WindowKind::Cp1).unwrap();
        assert!(h.window(WindowKind::Cp1).unwrap().kind.blanked());
        assert_eq!(h.window_counts(WindowKind::Cp1), 0);
        assert_eq!(h.window_counts(WindowKind::Cp2), 0);
        // Darks do land elsewhere.
        let after = h.bins_in(cp1.end_us, cp1.end_us + 100.0);
        assert!(h.counts[after].iter().sum::<u64>() > 0);
    }

    #[test]
    fn leakage_spike_only_in_cp2() {
        let c = ExperimentConfig { cp2_leakage: 3.0, ..cfg(1000) };
        let h = simulate_run(&c, &AnalysisSetting::new(Polarization::D)).unwrap();
        assert_eq!(h.window_counts(WindowKind::Cp1), 0);
        assert!(h.window_counts(WindowKind::Cp2) > 2000);
    }

    #[test]
    fn bin_width_must_divide_mode() {
        let c = ExperimentConfig { bin_width_us: 0.5, ..cfg(10) };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let ok = ExperimentConfig { bin_width_us: 0.25, ..cfg(10) };
        ok.validate().unwrap();
    }

    #[test]
    fn zero_length_window_is_config_error() {
        let mut c = cfg(10);
        c.schedule.control_duration_us = 0.0;
        assert!(matches!(simulate_run(&c, &AnalysisSetting::new(Polarization::D)), Err(Error::Config(_))));
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let c = cfg(40_000);
        let a = AnalysisSetting::new(Polarization::D);
        let h1 = simulate_run(&c, &a).unwrap();
        let h2 = simulate_run(&c, &a).unwrap();
        assert_eq!(h1, h2);
        let h3 = simulate_run(&ExperimentConfig { rng_seed: 8, ..c }, &a).unwrap();
        assert_ne!(h1.counts, h3.counts);
    }

    #[test]
    fn fine_bins_conserve_mode_counts() {
        let c = ExperimentConfig { bin_width_us: 0.25, ..cfg(20_000) };
        let h = simulate_run(&c, &AnalysisSetting::new(Polarization::D)).unwrap();
        let per_mode: u64 = (0..5).map(|m| h.mode_counts(WindowKind::Output, m)).sum();
        assert_eq!(per_mode, h.window_counts(WindowKind::Output));
    }

    #[test]
    fn spin_decay_examples() {
        let s = StorageSchedule::default();
        assert_eq!(spin_decay_factor(&s, 27e3, None), 1.0);
        assert!((spin_decay_factor(&s, 27e3, Some(2000.0)) - (-0.25f64).exp()).abs() < 1e-15);
        let s0 = StorageSchedule { control_spacing_us: 0.0, ..s };
        assert_eq!(spin_decay_factor(&s0, 27e3, Some(2000.0)), 1.0);
    }

    #[test]
    fn lossless_noiseless_estimate_is_perfect() {
        let c = ExperimentConfig {
            params: MemoryParams { eta: 1.0, p_n: 0.0, f_c: 1.0, ..MemoryParams::default() },
            dark_rate_hz: 0.0,
            transmission_to_detector: 1.0,
            detector_efficiency: 1.0,
            ..cfg(2000)
        };
        let hs: Vec<_> = [Polarization::D, Polarization::A]
            .iter()
            .map(|&p| simulate_run(&c, &AnalysisSetting::new(p)).unwrap())
            .collect();
        let noise = simulate_run(&noise_config(&c), &AnalysisSetting::new(Polarization::D)).unwrap();
        let e = estimate_params(&hs, &noise, &c).unwrap();
        assert_eq!(e.fidelity_hat, 1.0);
        assert_eq!(e.counts_orthogonal, 0);
        assert_eq!(e.p_n_hat, 0.0);
        assert!((e.eta_hat - 1.0).abs() < 3.0 * e.eta_err + 1e-12);
    }

    #[test]
    fn estimation_requires_counts_and_ports() {
        let c = ExperimentConfig {
            mu_per_mode: 0.0,
            params: MemoryParams { p_n: 0.0, ..MemoryParams::default() },
            dark_rate_hz: 0.0,
            ..cfg(100)
        };
        let d = simulate_run(&c, &AnalysisSetting::new(Polarization::D)).unwrap();
        let a = simulate_run(&c, &AnalysisSetting::new(Polarization::A)).unwrap();
        let err = estimate_params(&[d.clone(), a], &d, &c).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
        assert!(matches!(estimate_params(std::slice::from_ref(&d), &d, &c), Err(Error::InvalidInput(_))));
    }
}
