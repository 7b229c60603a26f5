//! Simulation and analysis toolkit for temporally multiplexed storage of
//! polarization qubits in an atomic-frequency-comb spin-wave memory.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical_bounds;
pub mod error;
pub mod memory_model;
pub mod montecarlo;
pub mod polarization;
pub mod reference;
pub mod tomography;

pub use error::{Error, Result};
pub use memory_model::{MemoryParams, StorageSchedule};
pub use montecarlo::{CountHistogram, ExperimentConfig, ParamEstimate};
pub use polarization::{AnalysisSetting, Polarization, PolarizationState};
