//! Measured reference values of the Eu:YSO polarization-qubit memory
//! experiment. Efficiencies and noise floors are fractions (not percent).

use crate::polarization::Polarization;

/// A measured value with its quoted one-sigma error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

const fn m(value: f64, err: f64) -> Measured {
    Measured { value, err }
}

/// One row of a memory characterization at a given input photon number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemoryRow {
    pub mu: Measured,
    pub eta: Measured,
    pub p_n: Measured,
    pub mu1: Measured,
    pub fidelity: Measured,
}

/// Conditional fidelity of `|D⟩` versus mean input photon number, five
/// modes summed.
pub const FIDELITY_VS_MU: [MemoryRow; 4] = [
    MemoryRow {
        mu: m(0.8, 0.1),
        eta: m(0.043, 0.004),
        p_n: m(0.0110, 0.0010),
        mu1: m(0.25, 0.04),
        fidelity: m(0.795, 0.002),
    },
    MemoryRow {
        mu: m(1.4, 0.1),
        eta: m(0.036, 0.003),
        p_n: m(0.0101, 0.0012),
        mu1: m(0.28, 0.04),
        fidelity: m(0.855, 0.001),
    },
    MemoryRow {
        mu: m(3.6, 0.3),
        eta: m(0.038, 0.002),
        p_n: m(0.0109, 0.0014),
        mu1: m(0.29, 0.04),
        fidelity: m(0.936, 0.001),
    },
    MemoryRow {
        mu: m(8.2, 0.6),
        eta: m(0.037, 0.002),
        p_n: m(0.0121, 0.0014),
        mu1: m(0.33, 0.05),
        fidelity: m(0.957, 0.0004),
    },
];

/// Individual temporal modes at μ ≈ 1.4, each encoding `|D⟩`.
pub const PER_MODE: [MemoryRow; 5] = [
    MemoryRow {
        mu: m(1.2, 0.1),
        eta: m(0.035, 0.006),
        p_n: m(0.0088, 0.0013),
        mu1: m(0.25, 0.08),
        fidelity: m(0.849, 0.036),
    },
    MemoryRow {
        mu: m(1.5, 0.1),
        eta: m(0.043, 0.006),
        p_n: m(0.0120, 0.0015),
        mu1: m(0.28, 0.07),
        fidelity: m(0.866, 0.029),
    },
    MemoryRow {
        mu: m(1.5, 0.1),
        eta: m(0.032, 0.005),
        p_n: m(0.0090, 0.0014),
        mu1: m(0.28, 0.08),
        fidelity: m(0.864, 0.035),
    },
    MemoryRow {
        mu: m(1.5, 0.1),
        eta: m(0.035, 0.006),
        p_n: m(0.0105, 0.0014),
        mu1: m(0.30, 0.08),
        fidelity: m(0.857, 0.032),
    },
    MemoryRow {
        mu: m(1.5, 0.1),
        eta: m(0.026, 0.005),
        p_n: m(0.0094, 0.0012),
        mu1: m(0.36, 0.10),
        fidelity: m(0.833, 0.038),
    },
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateRow {
    pub state: Polarization,
    pub eta: Measured,
    pub p_n: Measured,
    pub mu1: Measured,
    pub fidelity: Measured,
}

/// Mean input photon number of the per-state characterization.
pub const PER_STATE_MU: Measured = m(1.4, 0.1);

/// Per-input-state characterization at μ = 1.4.
pub const PER_STATE: [StateRow; 4] = [
    StateRow {
        state: Polarization::H,
        eta: m(0.033, 0.003),
        p_n: m(0.0093, 0.0013),
        mu1: m(0.28, 0.05),
        fidelity: m(0.841, 0.002),
    },
    StateRow {
        state: Polarization::V,
        eta: m(0.037, 0.003),
        p_n: m(0.0123, 0.0015),
        mu1: m(0.33, 0.05),
        fidelity: m(0.840, 0.001),
    },
    StateRow {
        state: Polarization::D,
        eta: m(0.036, 0.003),
        p_n: m(0.0101, 0.0012),
        mu1: m(0.28, 0.04),
        fidelity: m(0.855, 0.001),
    },
    StateRow {
        state: Polarization::R,
        eta: m(0.031, 0.002),
        p_n: m(0.0113, 0.0016),
        mu1: m(0.36, 0.06),
        fidelity: m(0.826, 0.001),
    },
];

/// Average fidelity over the four probe states.
pub const AVERAGE_FIDELITY: Measured = m(0.841, 0.001);

/// Reconstructed identity component of the process matrix.
pub const CHI_00: f64 = 0.762;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransmittedRow {
    pub mode: u32,
    pub transmission: f64,
    pub fidelity: Measured,
}

/// Transmitted (unabsorbed) light per mode, `|R⟩` input at μ = 1.4.
pub const TRANSMITTED: [TransmittedRow; 5] = [
    TransmittedRow { mode: 1, transmission: 0.338, fidelity: m(0.972, 0.004) },
    TransmittedRow { mode: 2, transmission: 0.280, fidelity: m(0.968, 0.005) },
    TransmittedRow { mode: 3, transmission: 0.304, fidelity: m(0.974, 0.004) },
    TransmittedRow { mode: 4, transmission: 0.301, fidelity: m(0.976, 0.004) },
    TransmittedRow { mode: 5, transmission: 0.255, fidelity: m(0.970, 0.005) },
];

/// Mean classical (bright-pulse) fidelity.
pub const CLASSICAL_FIDELITY: Measured = m(0.991, 0.004);

/// Global μ₁ used for the fidelity-curve fit.
pub const MU1_GLOBAL: Measured = m(0.29, 0.04);

/// Parameters of the transmitted-state classical bound.
pub const BOUND_F_T: f64 = 0.972;
pub const BOUND_ETA_T: f64 = 0.296;
pub const BOUND_ETA_M: f64 = 0.0385;

/// Detection chain.
pub const DETECTOR_EFFICIENCY: f64 = 0.57;
pub const DARK_RATE_HZ: f64 = 15.0;
pub const TRANSMISSION_TO_DETECTOR: f64 = 0.07;

/// Absorption and per-control-pulse transfer probabilities.
pub const ABSORPTION: Measured = m(0.70, 0.03);
pub const TRANSFER: Measured = m(0.70, 0.05);

/// Inhomogeneous spin linewidth.
pub const SPIN_LINEWIDTH_HZ: f64 = 27e3;
