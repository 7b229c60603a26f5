//! Figures of merit of the spin-wave memory and the analytic fidelity model.
//!
//! The memory is described by measured numbers only: retrieval efficiency
//! `eta`, unconditional noise floor `p_n` (per output mode window and
//! analyzer port), classical fidelity `f_c`, and the transmitted-light
//! efficiency/fidelity pair. Nothing here models the comb microscopics.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::polarization::PolarizationState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryParams {
    /// Retrieval probability per input photon.
    pub eta: f64,
    /// Noise detection probability per output mode window, referred to the
    /// memory output.
    pub p_n: f64,
    /// Phase-coherence fidelity measured with bright pulses.
    pub f_c: f64,
    /// Transmission of the unabsorbed input.
    pub eta_t: f64,
    /// Conditional fidelity of the transmitted light.
    pub f_t: f64,
    /// Relative efficiency anisotropy between orthogonal polarizations.
    pub eta_pol_spread: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self { eta: 0.0385, p_n: 0.0111, f_c: 0.991, eta_t: 0.296, f_t: 0.972, eta_pol_spread: 0.09 }
    }
}

impl MemoryParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("eta", self.eta)?;
        check_probability("p_n", self.p_n)?;
        check_probability("eta_t", self.eta_t)?;
        check_probability("eta_pol_spread", self.eta_pol_spread)?;
        for (name, f) in [("f_c", self.f_c), ("f_t", self.f_t)] {
            if !(0.5..=1.0).contains(&f) {
                return Err(Error::InvalidInput(format!("{name} = {f} outside [1/2, 1]")));
            }
        }
        Ok(())
    }

    pub fn with_eta_pn(eta: f64, p_n: f64) -> Self {
        Self { eta, p_n, ..Self::default() }
    }

    /// Efficiency seen by a given input polarization when the residual
    /// absorption anisotropy is switched on. The anisotropy axis is H/V.
    pub fn efficiency_for(&self, state: &PolarizationState, anisotropy: bool) -> f64 {
        if !anisotropy {
            return self.eta;
        }
        let z = state.bloch()[2];
        (self.eta * (1.0 + self.eta_pol_spread * z)).clamp(0.0, 1.0)
    }
}

/// `(s_max − s_min)/(s_max + s_min)`.
pub fn visibility(s_max: f64, s_min: f64) -> Result<f64> {
    if !(s_max >= 0.0 && s_min >= 0.0) {
        return Err(Error::InvalidInput(format!("signals must be nonnegative ({s_max}, {s_min})")));
    }
    if s_max + s_min == 0.0 {
        return Err(Error::Degenerate("s_max + s_min = 0".into()));
    }
    if s_min > s_max {
        return Err(Error::InvalidInput(format!("s_min {s_min} exceeds s_max {s_max}")));
    }
    Ok((s_max - s_min) / (s_max + s_min))
}

/// `(1 + v)/2`.
pub fn classical_fidelity(v: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::InvalidInput(format!("visibility {v} outside [-1, 1]")));
    }
    Ok(0.5 * (1.0 + v))
}

/// Input mean photon number giving unit output SNR, `p_n / eta`.
pub fn mu1(params: &MemoryParams) -> Result<f64> {
    if params.eta <= 0.0 {
        return Err(Error::Degenerate("eta = 0 makes mu1 undefined".into()));
    }
    Ok(params.p_n / params.eta)
}

/// Conditional fidelity at mean input photon number `mu`:
/// `(F_c + μ₁/μ)/(1 + 2μ₁/μ)`.
pub fn predicted_fidelity(mu: f64, params: &MemoryParams) -> Result<f64> {
    predicted_fidelity_from_mu1(mu, mu1(params)?, params.f_c)
}

pub fn predicted_fidelity_from_mu1(mu: f64, mu1: f64, f_c: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput(format!("mu = {mu} must be positive")));
    }
    if !(mu1 >= 0.0) {
        return Err(Error::InvalidInput(format!("mu1 = {mu1} must be nonnegative")));
    }
    let r = mu1 / mu;
    Ok((f_c + r) / (1.0 + 2.0 * r))
}

/// Optical-to-spin-wave conversion: absorption × transfer.
pub fn conversion_efficiency(absorption_prob: f64, transfer_prob: f64) -> Result<f64> {
    check_probability("absorption_prob", absorption_prob)?;
    check_probability("transfer_prob", transfer_prob)?;
    Ok(absorption_prob * transfer_prob)
}

/// Effective rate multiplier from temporal multiplexing.
pub fn multiplexing_gain(n_modes: u32) -> Result<f64> {
    if n_modes == 0 {
        return Err(Error::InvalidInput("n_modes must be at least 1".into()));
    }
    Ok(f64::from(n_modes))
}

/// Timing of one storage sequence. All durations in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageSchedule {
    /// AFC rephasing time 1/Δ.
    pub comb_delay_us: f64,
    /// Spacing T_S between the two optical control pulses.
    pub control_spacing_us: f64,
    pub mode_duration_us: f64,
    pub n_modes: u32,
    pub control_duration_us: f64,
    pub rf_pulse_duration_us: f64,
    pub rf_pulse_count: u32,
    /// Storage sequences per AFC preparation.
    pub n_rep: u32,
}

impl Default for StorageSchedule {
    fn default() -> Self {
        Self {
            comb_delay_us: 15.0,
            control_spacing_us: 500.0,
            mode_duration_us: 1.25,
            n_modes: 5,
            control_duration_us: 5.0,
            rf_pulse_duration_us: 120.0,
            rf_pulse_count: 4,
            n_rep: 18,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowKind {
    Input,
    Cp1,
    Cp2,
    Output,
}

impl WindowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Input => "input",
            WindowKind::Cp1 => "CP1",
            WindowKind::Cp2 => "CP2",
            WindowKind::Output => "output",
        }
    }

    /// Detector gate is closed during the control pulses.
    pub fn blanked(self) -> bool {
        matches!(self, WindowKind::Cp1 | WindowKind::Cp2)
    }
}

/// Labeled time interval `[start_us, end_us)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub kind: WindowKind,
    pub start_us: f64,
    pub end_us: f64,
}

impl Window {
    pub fn width_us(&self) -> f64 {
        self.end_us - self.start_us
    }

    pub fn contains(&self, t_us: f64) -> bool {
        t_us >= self.start_us && t_us < self.end_us
    }
}

impl StorageSchedule {
    pub fn total_storage_us(&self) -> f64 {
        self.comb_delay_us + self.control_spacing_us
    }

    pub fn input_train_us(&self) -> f64 {
        f64::from(self.n_modes) * self.mode_duration_us
    }

    /// Input train at t = 0, first control pulse right after it, second one
    /// T_S later, output train starting at the total storage time.
    pub fn windows(&self) -> [Window; 4] {
        let train = self.input_train_us();
        let cp1 = train;
        let cp2 = cp1 + self.control_spacing_us;
        let out = self.total_storage_us();
        [
            Window { kind: WindowKind::Input, start_us: 0.0, end_us: train },
            Window { kind: WindowKind::Cp1, start_us: cp1, end_us: cp1 + self.control_duration_us },
            Window { kind: WindowKind::Cp2, start_us: cp2, end_us: cp2 + self.control_duration_us },
            Window { kind: WindowKind::Output, start_us: out, end_us: out + train },
        ]
    }

    /// Start time of mode `m` within the input (or output) train.
    pub fn mode_offset_us(&self, m: u32) -> f64 {
        f64::from(m) * self.mode_duration_us
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleReport {
    pub violations: Vec<String>,
    pub total_storage_us: f64,
}

impl ScheduleReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the capacity and timing invariants of a schedule. Violations are
/// returned, never raised.
pub fn validate_schedule(s: &StorageSchedule) -> ScheduleReport {
    let mut violations = Vec::new();
    let positive = [
        ("comb_delay_us", s.comb_delay_us),
        ("control_spacing_us", s.control_spacing_us),
        ("mode_duration_us", s.mode_duration_us),
        ("control_duration_us", s.control_duration_us),
        ("rf_pulse_duration_us", s.rf_pulse_duration_us),
    ];
    for (name, v) in positive {
        if !(v > 0.0) || !v.is_finite() {
            violations.push(format!("{name} = {v} must be positive"));
        }
    }
    if s.n_modes == 0 {
        violations.push("n_modes must be at least 1".into());
    }
    if s.n_rep == 0 {
        violations.push("n_rep must be at least 1".into());
    }
    let occupied = s.input_train_us() + s.control_duration_us;
    if occupied > s.comb_delay_us * (1.0 + 1e-12) {
        violations.push(format!(
            "{} modes x {} us + {} us control = {} us exceeds comb delay {} us",
            s.n_modes, s.mode_duration_us, s.control_duration_us, occupied, s.comb_delay_us
        ));
    }
    let rf = f64::from(s.rf_pulse_count) * s.rf_pulse_duration_us;
    if rf > s.control_spacing_us * (1.0 + 1e-12) {
        violations.push(format!(
            "{} RF pulses x {} us = {} us exceed control spacing {} us",
            s.rf_pulse_count, s.rf_pulse_duration_us, rf, s.control_spacing_us
        ));
    }
    ScheduleReport { violations, total_storage_us: s.total_storage_us() }
}
