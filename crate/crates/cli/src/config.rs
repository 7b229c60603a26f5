//! Run configuration: one TOML document with a section per module. Every
//! field has a default, so an empty file is a valid configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use polmem_core::classical_bounds::SearchOptions;
use polmem_core::polarization::standard_state;
use polmem_core::{reference, ExperimentConfig, MemoryParams, Polarization, StorageSchedule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub memory: MemoryParams,
    pub schedule: StorageSchedule,
    pub experiment: ExperimentSection,
    pub predict: PredictSection,
    pub tomography: TomographySection,
    pub bounds: BoundsSection,
    pub reproduce: ReproduceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 20_140_521,
            memory: MemoryParams::default(),
            schedule: StorageSchedule::default(),
            experiment: ExperimentSection::default(),
            predict: PredictSection::default(),
            tomography: TomographySection::default(),
            bounds: BoundsSection::default(),
            reproduce: ReproduceSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub input_state: Polarization,
    pub mu_per_mode: f64,
    /// Extra photon numbers to simulate; empty means `mu_per_mode` only.
    pub mu: Vec<f64>,
    pub detector_efficiency: f64,
    pub dark_rate_hz: f64,
    pub transmission_to_detector: f64,
    pub bin_width_us: f64,
    pub gate_width_us: Option<f64>,
    pub noise_port_fraction: f64,
    pub anisotropy: bool,
    pub cp2_leakage: f64,
    pub spin_linewidth_hz: f64,
    pub t2_dd_us: Option<f64>,
    pub trials: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        Self {
            input_state: Polarization::D,
            mu_per_mode: d.mu_per_mode,
            mu: Vec::new(),
            detector_efficiency: d.detector_efficiency,
            dark_rate_hz: d.dark_rate_hz,
            transmission_to_detector: d.transmission_to_detector,
            bin_width_us: d.bin_width_us,
            gate_width_us: d.gate_width_us,
            noise_port_fraction: d.noise_port_fraction,
            anisotropy: d.anisotropy,
            cp2_leakage: d.cp2_leakage,
            spin_linewidth_hz: d.spin_linewidth_hz,
            t2_dd_us: d.t2_dd_us,
            trials: d.trials,
        }
    }
}

/// A μ grid: explicit values when `mu` is non-empty, otherwise `points`
/// log-spaced values in `[mu_min, mu_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuGrid {
    pub mu: Vec<f64>,
    pub mu_min: f64,
    pub mu_max: f64,
    pub points: usize,
}

impl Default for MuGrid {
    fn default() -> Self {
        Self::range(0.1, 10.0, 100)
    }
}

impl MuGrid {
    fn range(mu_min: f64, mu_max: f64, points: usize) -> Self {
        Self { mu: Vec::new(), mu_min, mu_max, points }
    }

    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = if self.mu.is_empty() {
            if !(self.mu_min > 0.0 && self.mu_max >= self.mu_min && self.points >= 1) {
                return Err(CliError::Config(format!(
                    "invalid mu range [{}, {}] with {} points",
                    self.mu_min, self.mu_max, self.points
                )));
            }
            if self.points == 1 {
                vec![self.mu_min]
            } else {
                let (a, b) = (self.mu_min.ln(), self.mu_max.ln());
                (0..self.points).map(|i| (a + (b - a) * i as f64 / (self.points - 1) as f64).exp()).collect()
            }
        } else {
            self.mu.clone()
        };
        if let Some(bad) = v.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(CliError::Config(format!("mean photon number {bad} must be positive")));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub grid: MuGrid,
    pub mu1: f64,
    pub mu1_err: f64,
    pub f_c: f64,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            grid: MuGrid::default(),
            mu1: reference::MU1_GLOBAL.value,
            mu1_err: reference::MU1_GLOBAL.err,
            f_c: reference::CLASSICAL_FIDELITY.value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateParams {
    pub state: Polarization,
    pub mu: f64,
    pub eta: f64,
    pub p_n: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographySection {
    /// Storage sequences per analyzer setting when counts are simulated.
    pub trials: u64,
    pub resamples: usize,
    pub settings: Vec<Polarization>,
    /// Memory parameters per probe state for simulated counts.
    pub states: Vec<StateParams>,
    /// Measured counts per probe state (`H`, `V`, `D`, `R`), CSV files with
    /// `setting,counts[,exposure[,background]]` rows. Relative paths are
    /// resolved against the config file. When given, nothing is simulated.
    pub count_files: BTreeMap<Polarization, PathBuf>,
}

impl Default for TomographySection {
    fn default() -> Self {
        Self {
            trials: 40_000,
            resamples: 200,
            settings: Polarization::ALL.to_vec(),
            states: reference::PER_STATE
                .iter()
                .map(|r| StateParams {
                    state: r.state,
                    mu: reference::PER_STATE_MU.value,
                    eta: r.eta.value,
                    p_n: r.p_n.value,
                })
                .collect(),
            count_files: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuredPoint {
    pub mu: f64,
    pub fidelity: f64,
    pub err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub f_t: f64,
    pub eta_t: f64,
    pub eta_m: f64,
    /// Error multiplier in the verdict `F − k·σ > bound`.
    pub k: f64,
    pub grid: MuGrid,
    pub search: SearchOptions,
    pub measured: Vec<MeasuredPoint>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            f_t: reference::BOUND_F_T,
            eta_t: reference::BOUND_ETA_T,
            eta_m: reference::BOUND_ETA_M,
            k: 1.0,
            grid: MuGrid::range(0.5, 10.0, 40),
            search: SearchOptions::default(),
            measured: reference::FIDELITY_VS_MU
                .iter()
                .map(|r| MeasuredPoint { mu: r.mu.value, fidelity: r.fidelity.value, err: r.fidelity.err })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceSection {
    /// Storage sequences per analyzer run for the memory tables.
    pub trials: u64,
    /// Storage sequences per analyzer setting for the tomography table.
    pub tomography_trials: u64,
    pub resamples: usize,
}

impl Default for ReproduceSection {
    fn default() -> Self {
        Self { trials: 1_000_000, tomography_trials: 40_000, resamples: 200 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // Count files are relative to the config that names them.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.tomography.count_files.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the canonical TOML form, lowercase hex.
    pub fn hash(&self) -> Result<String, CliError> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("seed {} does not fit in a signed 64-bit integer", self.seed)));
        }
        self.memory.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.experiment_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.predict.mu1 >= 0.0 && self.predict.mu1_err >= 0.0) {
            return Err(CliError::Config("mu1 and mu1_err must be nonnegative".into()));
        }
        if !(self.bounds.k >= 0.0) {
            return Err(CliError::Config("k must be nonnegative".into()));
        }
        if self.tomography.resamples < 100 || self.reproduce.resamples < 100 {
            return Err(CliError::Config("resamples must be at least 100".into()));
        }
        Ok(())
    }

    /// Core simulation settings for the configured experiment.
    pub fn experiment_config(&self) -> ExperimentConfig {
        let ex = &self.experiment;
        ExperimentConfig {
            input_state: standard_state(ex.input_state),
            mu_per_mode: ex.mu_per_mode,
            schedule: self.schedule,
            params: self.memory,
            mode_params: Vec::new(),
            mode_mu: Vec::new(),
            detector_efficiency: ex.detector_efficiency,
            dark_rate_hz: ex.dark_rate_hz,
            transmission_to_detector: ex.transmission_to_detector,
            bin_width_us: ex.bin_width_us,
            gate_width_us: ex.gate_width_us,
            noise_port_fraction: ex.noise_port_fraction,
            anisotropy: ex.anisotropy,
            cp2_leakage: ex.cp2_leakage,
            spin_linewidth_hz: ex.spin_linewidth_hz,
            t2_dd_us: ex.t2_dd_us,
            trials: ex.trials,
            rng_seed: self.seed,
            record_trials: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn empty_document_is_default() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[memory]\netta = 0.1").is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: a.seed + 1, ..a.clone() };
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn mu_grid_values() {
        let g = MuGrid::range(0.1, 10.0, 3);
        let v = g.values().unwrap();
        assert!((v[1] - 1.0).abs() < 1e-12 && (v[2] - 10.0).abs() < 1e-12);
        assert!(MuGrid::range(0.0, 1.0, 3).values().is_err());
        assert!(MuGrid { mu: vec![1.0, -2.0], ..MuGrid::range(1.0, 1.0, 1) }.values().is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.memory.eta = 1.5;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.schedule.n_modes = 20;
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
