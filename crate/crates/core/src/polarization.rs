//! Polarization-qubit state algebra over the fixed `{|H⟩, |V⟩}` basis.
//!
//! States are 2×2 density matrices. Analyzer settings are rank-one
//! projectors onto the six standard polarizations; only one PBS port is
//! modeled per setting, so the orthogonal port is obtained from the
//! complementary setting.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<Complex64>;

const STATE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const PURE_TOL: f64 = 1e-9;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Real trace of `a · b`.
#[inline]
pub fn trace_product(a: &Mat2, b: &Mat2) -> Complex64 {
    (a * b).trace()
}

/// Eigenvalues of a 2×2 Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    [half_tr - disc, half_tr + disc]
}

/// The standard polarization labels.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] =
        [Polarization::H, Polarization::V, Polarization::D, Polarization::A, Polarization::R, Polarization::L];

    /// Inputs used to probe the memory channel.
    pub const PROBE_INPUTS: [Polarization; 4] = [Polarization::H, Polarization::V, Polarization::D, Polarization::R];

    pub fn orthogonal(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
            Polarization::D => Polarization::A,
            Polarization::A => Polarization::D,
            Polarization::R => Polarization::L,
            Polarization::L => Polarization::R,
        }
    }

    /// Ket in the `{|H⟩, |V⟩}` basis. `|R⟩ = (|H⟩ + i|V⟩)/√2`.
    pub fn ket(self) -> Vector2<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Polarization::H => Vector2::new(c(1.0, 0.0), c(0.0, 0.0)),
            Polarization::V => Vector2::new(c(0.0, 0.0), c(1.0, 0.0)),
            Polarization::D => Vector2::new(c(s, 0.0), c(s, 0.0)),
            Polarization::A => Vector2::new(c(s, 0.0), c(-s, 0.0)),
            Polarization::R => Vector2::new(c(s, 0.0), c(0.0, s)),
            Polarization::L => Vector2::new(c(s, 0.0), c(0.0, -s)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
            Polarization::D => "D",
            Polarization::A => "A",
            Polarization::R => "R",
            Polarization::L => "L",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" | "h" => Ok(Polarization::H),
            "V" | "v" => Ok(Polarization::V),
            "D" | "d" => Ok(Polarization::D),
            "A" | "a" => Ok(Polarization::A),
            "R" | "r" => Ok(Polarization::R),
            "L" | "l" => Ok(Polarization::L),
            other => Err(Error::InvalidInput(format!("unknown polarization label {other:?}"))),
        }
    }
}

/// Identity and the three Pauli matrices in the order (I, X, Y, Z).
pub fn pauli_basis() -> [Mat2; 4] {
    let o = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [Mat2::new(one, o, o, one), Mat2::new(o, one, one, o), Mat2::new(o, -i, i, o), Mat2::new(one, o, o, -one)]
}

/// A qubit density matrix over `{|H⟩, |V⟩}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationState {
    rho: Mat2,
}

impl PolarizationState {
    /// Validates trace, hermiticity and positivity.
    pub fn new(rho: Mat2) -> Result<Self> {
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("density matrix has non-finite entries".into()));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidInput(format!("trace {tr} != 1")));
        }
        if (rho - rho.adjoint()).norm() > STATE_TOL {
            return Err(Error::InvalidInput("density matrix is not Hermitian".into()));
        }
        let [lo, _] = hermitian_eigenvalues(&rho);
        if lo < -PSD_TOL {
            return Err(Error::InvalidInput(format!("negative eigenvalue {lo}")));
        }
        Ok(Self { rho })
    }

    /// Normalizes `m` by its trace and symmetrizes it before validating.
    pub fn from_unnormalized(m: Mat2) -> Result<Self> {
        let tr = m.trace().re;
        if !(tr > 0.0) {
            return Err(Error::Degenerate("matrix has non-positive trace".into()));
        }
        let h = (m + m.adjoint()).scale(0.5 / tr);
        Self::new(h)
    }

    pub fn pure(ket: &Vector2<Complex64>) -> Result<Self> {
        let n = ket.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidInput("zero ket".into()));
        }
        let k = ket.unscale(n);
        Self::new(k * k.adjoint())
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: Mat2::identity().scale(0.5) }
    }

    /// State with Bloch vector `r` (|r| ≤ 1) in the (X, Y, Z) Pauli frame.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let p = pauli_basis();
        let m = p[0] + p[1].scale(r[0]) + p[2].scale(r[1]) + p[3].scale(r[2]);
        Self::new(m.scale(0.5))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.rho
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.rho, &self.rho).re
    }

    pub fn is_pure(&self) -> bool {
        self.purity() > 1.0 - PURE_TOL
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues(&self.rho)
    }

    /// `tr(ρ σ_k)` for k in (I, X, Y, Z).
    pub fn pauli_coefficients(&self) -> [f64; 4] {
        let p = pauli_basis();
        std::array::from_fn(|k| trace_product(&self.rho, &p[k]).re)
    }

    pub fn bloch(&self) -> [f64; 3] {
        let c = self.pauli_coefficients();
        [c[1], c[2], c[3]]
    }

    /// Trace distance `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &PolarizationState) -> f64 {
        let diff = self.rho - other.rho;
        let [a, b] = hermitian_eigenvalues(&diff);
        0.5 * (a.abs() + b.abs())
    }
}

/// Pure-state density matrix for a standard label.
pub fn standard_state(label: Polarization) -> PolarizationState {
    let k = label.ket();
    PolarizationState { rho: k * k.adjoint() }
}

/// Parses a label and returns its state.
pub fn standard_state_from_label(label: &str) -> Result<PolarizationState> {
    Ok(standard_state(label.parse()?))
}

/// One analyzer port: a rank-one projector onto a standard polarization.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisSetting {
    label: Polarization,
    projector: Mat2,
}

impl AnalysisSetting {
    pub fn new(label: Polarization) -> Self {
        Self { label, projector: *standard_state(label).matrix() }
    }

    pub fn all() -> Vec<AnalysisSetting> {
        Polarization::ALL.iter().map(|&l| Self::new(l)).collect()
    }

    pub fn label(&self) -> Polarization {
        self.label
    }

    pub fn projector(&self) -> &Mat2 {
        &self.projector
    }

    pub fn complement(&self) -> AnalysisSetting {
        Self::new(self.label.orthogonal())
    }
}

/// Detection probability per photon: `tr(ρ P)`.
pub fn expectation(rho: &PolarizationState, setting: &AnalysisSetting) -> f64 {
    trace_product(&rho.rho, &setting.projector).re.clamp(0.0, 1.0)
}

/// Fidelity in the squared convention: `⟨ψ|ρ|ψ⟩` when either argument is pure,
/// Uhlmann `(tr √(√ρ σ √ρ))²` otherwise. For qubits the latter equals
/// `tr(ρσ) + 2√(det ρ · det σ)`.
pub fn fidelity(rho: &PolarizationState, target: &PolarizationState) -> f64 {
    let overlap = trace_product(&rho.rho, &target.rho).re;
    if target.is_pure() || rho.is_pure() {
        return overlap.clamp(0.0, 1.0);
    }
    let det_a = rho.rho.determinant().re.max(0.0);
    let det_b = target.rho.determinant().re.max(0.0);
    (overlap + 2.0 * (det_a * det_b).sqrt()).clamp(0.0, 1.0)
}

/// `ρ = ½ Σ_k c_k σ_k`.
pub fn from_pauli_coefficients(coeffs: [f64; 4]) -> Mat2 {
    let p = pauli_basis();
    (0..4).fold(Mat2::zeros(), |acc, k| acc + p[k].scale(0.5 * coeffs[k]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn standard_states_match_definitions() {
        let h = standard_state(Polarization::H);
        assert!(close(h.matrix(), &Mat2::new(c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)), 1e-15));

        let d = standard_state(Polarization::D);
        assert!(d.matrix().iter().all(|z| (z - c(0.5, 0.0)).norm() < 1e-15));

        let r = standard_state(Polarization::R);
        let want = Mat2::new(c(0.5, 0.), c(0., -0.5), c(0., 0.5), c(0.5, 0.));
        assert!(close(r.matrix(), &want, 1e-15));
    }

    #[test]
    fn unknown_label_is_rejected() {
        assert!(matches!(standard_state_from_label("X"), Err(Error::InvalidInput(_))));
        assert!(standard_state_from_label("R").is_ok());
    }

    #[test]
    fn fidelity_examples() {
        let h = standard_state(Polarization::H);
        let v = standard_state(Polarization::V);
        let d = standard_state(Polarization::D);
        assert!((fidelity(&h, &h) - 1.0).abs() < 1e-15);
        assert!(fidelity(&h, &v).abs() < 1e-15);
        assert!((fidelity(&h, &d) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixed_fidelity_uses_uhlmann() {
        let a = PolarizationState::from_bloch([0.0, 0.0, 0.6]).unwrap();
        let m = PolarizationState::maximally_mixed();
        // F(ρ, I/2) = (tr √(ρ/2))² = ½(√p + √(1-p))²
        let want = 0.5 * (0.8f64.sqrt() + 0.2f64.sqrt()).powi(2);
        assert!((fidelity(&a, &m) - want).abs() < 1e-12);
        assert!((fidelity(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let d = standard_state(Polarization::D);
        assert!((expectation(&d, &AnalysisSetting::new(Polarization::D)) - 1.0).abs() < 1e-15);
        assert!(expectation(&d, &AnalysisSetting::new(Polarization::A)).abs() < 1e-15);
        let m = PolarizationState::maximally_mixed();
        for s in AnalysisSetting::all() {
            assert!((expectation(&m, &s) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn projectors_are_idempotent_rank_one() {
        for s in AnalysisSetting::all() {
            let p = s.projector();
            assert!(close(&(p * p), p, 1e-12));
            assert!((p.trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pauli_algebra() {
        let p = pauli_basis();
        for k in 0..4 {
            assert!(close(&(p[k] * p[k]), &Mat2::identity(), 1e-15));
            for l in 0..4 {
                let t = trace_product(&p[k], &p[l]);
                let want = if k == l { 2.0 } else { 0.0 };
                assert!((t - c(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn invalid_matrices_are_rejected() {
        let not_unit = Mat2::identity();
        assert!(PolarizationState::new(not_unit).is_err());
        let not_psd = Mat2::new(c(1.5, 0.), c(0., 0.), c(0., 0.), c(-0.5, 0.));
        assert!(PolarizationState::new(not_psd).is_err());
        let not_herm = Mat2::new(c(0.5, 0.), c(0.1, 0.), c(0.0, 0.), c(0.5, 0.));
        assert!(PolarizationState::new(not_herm).is_err());
    }
}
