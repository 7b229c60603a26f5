//! Maximum-likelihood state reconstruction from photon counts and qubit
//! process tomography in the Pauli basis.
//!
//! The state estimate is parametrized as `M = T†T` with `T` lower triangular
//! (two real diagonal entries and one complex off-diagonal entry). `M`
//! carries both the state and the overall detected intensity, so the
//! expected count for setting `j` is `N_j tr(M P_j) + b_j` and the Poisson
//! likelihood is maximized without constraints. The reconstructed state is
//! `M / tr M`.

use std::io::{self, Write};

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::polarization::{
    c, fidelity, pauli_basis, trace_product, AnalysisSetting, Mat2, Polarization, PolarizationState,
};

pub type Mat4 = Matrix4<Complex64>;

const MAX_ITERATIONS: usize = 10_000;
const REL_TOL: f64 = 1e-10;

/// Counts recorded behind one analyzer setting.
#[derive(Clone, Debug, PartialEq)]
pub struct SettingCounts {
    pub setting: AnalysisSetting,
    pub counts: u64,
    /// Relative exposure (acquisition time, trials).
    pub exposure: f64,
    /// Expected background counts, subtracted inside the likelihood.
    pub background: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyData {
    entries: Vec<SettingCounts>,
}

impl TomographyData {
    pub fn new(entries: Vec<SettingCounts>) -> Result<Self> {
        for e in &entries {
            if !(e.exposure > 0.0) || !e.exposure.is_finite() {
                return Err(Error::InvalidInput(format!("exposure of {} must be positive", e.setting.label())));
            }
            if !(e.background >= 0.0) {
                return Err(Error::InvalidInput("background must be nonnegative".into()));
            }
        }
        // Pauli coefficients of the projectors must span R^4.
        let p = pauli_basis();
        let rows: Vec<f64> =
            entries.iter().flat_map(|e| (0..4).map(move |k| trace_product(e.setting.projector(), &p[k]).re)).collect();
        let m = DMatrix::from_row_slice(entries.len(), 4, &rows);
        if entries.len() < 4 || m.rank(1e-9) < 4 {
            return Err(Error::InvalidInput("analyzer settings are not informationally complete".into()));
        }
        Ok(Self { entries })
    }

    /// Equal exposure and no background.
    pub fn from_counts(counts: &[(Polarization, u64)]) -> Result<Self> {
        Self::new(
            counts
                .iter()
                .map(|&(p, n)| SettingCounts {
                    setting: AnalysisSetting::new(p),
                    counts: n,
                    exposure: 1.0,
                    background: 0.0,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[SettingCounts] {
        &self.entries
    }

    pub fn total_counts(&self) -> u64 {
        self.entries.iter().map(|e| e.counts).sum()
    }

    fn with_counts(&self, counts: &[u64]) -> Self {
        let entries = self.entries.iter().zip(counts).map(|(e, &n)| SettingCounts { counts: n, ..e.clone() }).collect();
        Self { entries }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrixEstimate {
    pub rho_hat: PolarizationState,
    /// `Σ n ln λ − λ`, without the `ln n!` constant.
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Smallest eigenvalue below 1e-6: the data sit on the boundary.
    pub low_rank: bool,
    /// Log-likelihood after each accepted step.
    pub history: Vec<f64>,
}

type Params = Vector4<f64>;

fn unnormalized(t: &Params) -> Mat2 {
    let (a, b) = (t[0], t[1]);
    let cc = c(t[2], t[3]);
    Mat2::new(c(a * a + cc.norm_sqr(), 0.0), cc.conj() * b, cc * b, c(b * b, 0.0))
}

fn d_unnormalized(t: &Params) -> [Mat2; 4] {
    let (a, b) = (t[0], t[1]);
    let cc = c(t[2], t[3]);
    let z = c(0.0, 0.0);
    [
        Mat2::new(c(2.0 * a, 0.0), z, z, z),
        Mat2::new(z, cc.conj(), cc, c(2.0 * b, 0.0)),
        Mat2::new(c(2.0 * t[2], 0.0), c(b, 0.0), c(b, 0.0), z),
        Mat2::new(c(2.0 * t[3], 0.0), c(0.0, -b), c(0.0, b), z),
    ]
}

struct Likelihood<'a> {
    data: &'a TomographyData,
}

impl Likelihood<'_> {
    fn rate(&self, m: &Mat2, e: &SettingCounts) -> f64 {
        e.exposure * trace_product(m, e.setting.projector()).re.max(0.0) + e.background
    }

    fn value(&self, t: &Params) -> f64 {
        let m = unnormalized(t);
        self.data.entries.iter().fold(0.0, |acc, e| {
            let lam = self.rate(&m, e);
            let n = e.counts as f64;
            let log_term = if e.counts == 0 {
                0.0
            } else if lam > 0.0 {
                n * lam.ln()
            } else {
                f64::NEG_INFINITY
            };
            acc + log_term - lam
        })
    }

    fn gradient(&self, t: &Params) -> Params {
        let m = unnormalized(t);
        let dm = d_unnormalized(t);
        let mut g = Params::zeros();
        for e in &self.data.entries {
            let lam = self.rate(&m, e);
            let w = if e.counts == 0 { -1.0 } else { e.counts as f64 / lam - 1.0 };
            for k in 0..4 {
                g[k] += w * e.exposure * trace_product(&dm[k], e.setting.projector()).re;
            }
        }
        g
    }
}

/// Poisson maximum-likelihood reconstruction by BFGS ascent with a
/// backtracking (Armijo) line search. Every accepted step increases the
/// likelihood.
pub fn mle_state(data: &TomographyData) -> Result<DensityMatrixEstimate> {
    let signal: f64 = data.entries.iter().map(|e| (e.counts as f64 - e.background).max(0.0)).sum();
    if data.total_counts() == 0 || !(signal > 0.0) {
        return Err(Error::Estimation("no counts above background".into()));
    }
    let exposure: f64 = data.entries.iter().map(|e| e.exposure).sum();
    // Maximally mixed start with the right intensity: tr(M P) = s for all P.
    let s = signal / exposure;
    let mut t = Params::new(s.sqrt(), s.sqrt(), 0.0, 0.0);
    let lik = Likelihood { data };
    let mut value = lik.value(&t);
    let mut grad = lik.gradient(&t);
    // Inverse Hessian approximation of the negated objective.
    let mut h = nalgebra::Matrix4::<f64>::identity() * (0.1 / grad.norm().max(1.0)) * s.max(1e-12);
    let mut history = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    let mut quiet_steps = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut dir = h * grad;
        if dir.dot(&grad) <= 0.0 {
            h = nalgebra::Matrix4::identity() * (s.max(1e-12) / grad.norm().max(1.0));
            dir = h * grad;
        }
        let slope = dir.dot(&grad);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = t + dir * step;
            let v = lik.value(&trial);
            if v.is_finite() && v >= value + 1e-4 * step * slope {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        let Some((t_new, v_new)) = accepted else {
            // No ascent direction left at machine precision.
            converged = grad.norm() * t.norm().max(1.0) < 1e-6 * value.abs().max(1.0);
            break;
        };
        let g_new = lik.gradient(&t_new);
        let change = (v_new - value).abs() / value.abs().max(1.0);
        let sk = t_new - t;
        // Minimization form: y = −(g_new − g).
        let yk = -(g_new - grad);
        let sy = sk.dot(&yk);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = nalgebra::Matrix4::<f64>::identity();
            h = (i - sk * yk.transpose() * rho) * h * (i - yk * sk.transpose() * rho) + sk * sk.transpose() * rho;
        }
        t = t_new;
        value = v_new;
        grad = g_new;
        history.push(value);
        // A single short line-search step is not enough evidence.
        quiet_steps = if change < REL_TOL { quiet_steps + 1 } else { 0 };
        if quiet_steps >= 3 {
            converged = true;
            break;
        }
    }

    let rho_hat = PolarizationState::from_unnormalized(unnormalized(&t))?;
    let low_rank = rho_hat.eigenvalues()[0] < 1e-6;
    Ok(DensityMatrixEstimate { rho_hat, log_likelihood: value, converged, iterations, low_rank, history })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyErrors {
    pub resamples: usize,
    pub fidelity_mean: f64,
    pub fidelity_std: f64,
    pub purity_std: f64,
    pub bloch_std: [f64; 3],
}

fn sample_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Parametric bootstrap: Poisson-resample every count, reconstruct, and
/// report sample standard deviations of the fidelity with `target` and of
/// other derived scalars.
pub fn monte_carlo_errors(
    data: &TomographyData,
    target: &PolarizationState,
    resamples: usize,
    seed: u64,
) -> Result<TomographyErrors> {
    if resamples < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 resamples, got {resamples}")));
    }
    if data.total_counts() == 0 {
        return Err(Error::Estimation("no counts to resample".into()));
    }
    let draws: Vec<Option<(f64, f64, [f64; 3])>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let counts: Vec<u64> = data
                .entries
                .iter()
                .map(|e| if e.counts == 0 { 0 } else { Poisson::new(e.counts as f64).unwrap().sample(&mut rng) as u64 })
                .collect();
            let est = mle_state(&data.with_counts(&counts)).ok()?;
            Some((fidelity(&est.rho_hat, target), est.rho_hat.purity(), est.rho_hat.bloch()))
        })
        .collect();
    let ok: Vec<_> = draws.into_iter().flatten().collect();
    if ok.len() < 2 {
        return Err(Error::Estimation("too few successful resamples".into()));
    }
    let fid: Vec<f64> = ok.iter().map(|d| d.0).collect();
    let pur: Vec<f64> = ok.iter().map(|d| d.1).collect();
    let (fidelity_mean, fidelity_std) = sample_std(&fid);
    let bloch_std = std::array::from_fn(|k| sample_std(&ok.iter().map(|d| d.2[k]).collect::<Vec<_>>()).1);
    Ok(TomographyErrors { resamples: ok.len(), fidelity_mean, fidelity_std, purity_std: sample_std(&pur).1, bloch_std })
}

/// Process matrix `χ` in the (I, X, Y, Z) Pauli basis:
/// `ρ_out = Σ_kl χ_kl σ_k ρ σ_l†`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    chi: Mat4,
}

impl ProcessMatrix {
    pub fn new(chi: Mat4) -> Result<Self> {
        if (chi - chi.adjoint()).norm() > 1e-10 {
            return Err(Error::InvalidInput("process matrix is not Hermitian".into()));
        }
        Ok(Self { chi })
    }

    pub fn identity() -> Self {
        Self::unit(0)
    }

    /// Pure Pauli channel `σ_k ρ σ_k`.
    pub fn unit(k: usize) -> Self {
        let mut chi = Mat4::zeros();
        chi[(k, k)] = c(1.0, 0.0);
        Self { chi }
    }

    pub fn diagonal(p: [f64; 4]) -> Self {
        Self { chi: Mat4::from_diagonal(&Vector4::from(p.map(|x| c(x, 0.0)))) }
    }

    /// From Kraus operators: `χ_kl = Σ_a c_ak c_al*` with `K_a = Σ_k c_ak σ_k`.
    pub fn from_kraus(kraus: &[Mat2]) -> Self {
        let p = pauli_basis();
        let mut chi = Mat4::zeros();
        for k_op in kraus {
            let coeffs: [Complex64; 4] = std::array::from_fn(|k| trace_product(&p[k], k_op) * 0.5);
            for k in 0..4 {
                for l in 0..4 {
                    chi[(k, l)] += coeffs[k] * coeffs[l].conj();
                }
            }
        }
        Self { chi }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.chi
    }

    pub fn chi00(&self) -> f64 {
        self.chi[(0, 0)].re
    }

    /// `‖Σ χ_kl σ_l† σ_k − I‖_F`.
    pub fn tp_deviation(&self) -> f64 {
        (tp_map(&self.chi) - Mat2::identity()).norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.chi).eigenvalues.min()
    }
}

fn tp_map(chi: &Mat4) -> Mat2 {
    let p = pauli_basis();
    let mut out = Mat2::zeros();
    for k in 0..4 {
        for l in 0..4 {
            out += (p[l] * p[k]) * chi[(k, l)];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessOutput {
    pub state: PolarizationState,
    /// The trace was renormalized because `χ` is not trace preserving.
    pub renormalized: bool,
}

/// Evaluates `Σ_kl χ_kl σ_k ρ σ_l†`.
pub fn apply_process(chi: &ProcessMatrix, rho_in: &PolarizationState) -> Result<ProcessOutput> {
    let p = pauli_basis();
    let mut out = Mat2::zeros();
    for k in 0..4 {
        for l in 0..4 {
            out += p[k] * rho_in.matrix() * p[l].adjoint() * chi.chi[(k, l)];
        }
    }
    let tr = out.trace().re;
    let renormalized = (tr - 1.0).abs() > 1e-10;
    let state = PolarizationState::from_unnormalized(out).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("process output is not a state: {msg}")),
        other => other,
    })?;
    Ok(ProcessOutput { state, renormalized })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessTomography {
    /// Linear inversion, Hermitian part.
    pub raw: Mat4,
    /// Nearest completely positive, trace-preserving process.
    pub projected: ProcessMatrix,
    pub projection_iterations: usize,
    pub projection_converged: bool,
}

/// Linear inversion of the process from input/output pairs followed by
/// projection onto the CP-TP set.
pub fn process_tomography(inputs: &[PolarizationState], outputs: &[PolarizationState]) -> Result<ProcessTomography> {
    if inputs.len() != outputs.len() {
        return Err(Error::InvalidInput("inputs and outputs differ in length".into()));
    }
    let n = inputs.len();
    let coeffs: Vec<f64> = inputs.iter().flat_map(|s| s.pauli_coefficients()).collect();
    let cm = DMatrix::from_row_slice(n, 4, &coeffs);
    let svd = cm.clone().svd(false, false);
    if n < 4 || svd.singular_values.min() < 1e-8 {
        return Err(Error::InvalidInput("input states do not span the operator space".into()));
    }
    let pinv = cm.pseudo_inverse(1e-12).map_err(|e| Error::InvalidInput(e.to_string()))?;

    // Λ(σ_k) = 2 Σ_i C⁺_ki Λ(ρ_i)
    let lam_pauli: [Mat2; 4] = std::array::from_fn(|k| {
        (0..n).fold(Mat2::zeros(), |acc, i| acc + outputs[i].matrix() * c(2.0 * pinv[(k, i)], 0.0))
    });
    let p = pauli_basis();
    // Superoperator on column-major vec: column i + 2j holds vec Λ(E_ij).
    let mut superop = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let lam = (0..4).fold(Mat2::zeros(), |acc, k| acc + lam_pauli[k] * (p[k][(j, i)] * 0.5));
            for col in 0..2 {
                for row in 0..2 {
                    superop[(row + 2 * col, i + 2 * j)] = lam[(row, col)];
                }
            }
        }
    }
    let mut chi = Mat4::zeros();
    for k in 0..4 {
        for l in 0..4 {
            let basis = p[l].map(|z| z.conj()).kronecker(&p[k]);
            chi[(k, l)] = (basis.adjoint() * superop).trace() * 0.25;
        }
    }
    let raw = (chi + chi.adjoint()) * c(0.5, 0.0);
    let (projected, projection_iterations, projection_converged) = project_cptp(&raw);
    Ok(ProcessTomography {
        raw,
        projected: ProcessMatrix { chi: projected },
        projection_iterations,
        projection_converged,
    })
}

struct TpProjector {
    a: DMatrix<Complex64>,
    a_pinv: DMatrix<Complex64>,
    target: DMatrix<Complex64>,
}

impl TpProjector {
    fn new() -> Self {
        let p = pauli_basis();
        let mut a = DMatrix::<Complex64>::zeros(4, 16);
        for k in 0..4 {
            for l in 0..4 {
                let m = p[l] * p[k];
                for (idx, z) in m.iter().enumerate() {
                    a[(idx, k * 4 + l)] = *z;
                }
            }
        }
        let aat = &a * a.adjoint();
        let inv = aat.try_inverse().expect("TP constraint map has full rank");
        let a_pinv = a.adjoint() * inv;
        let ident = Mat2::identity();
        let target = DMatrix::from_iterator(4, 1, ident.iter().copied());
        Self { a, a_pinv, target }
    }

    fn project(&self, chi: &Mat4) -> Mat4 {
        let x = DMatrix::from_iterator(16, 1, (0..16).map(|i| chi[(i / 4, i % 4)]));
        let resid = &self.a * &x - &self.target;
        let y = x - &self.a_pinv * resid;
        let out = Mat4::from_fn(|k, l| y[(k * 4 + l, 0)]);
        (out + out.adjoint()) * c(0.5, 0.0)
    }
}

fn project_psd(chi: &Mat4) -> Mat4 {
    let eig = SymmetricEigen::new(*chi);
    let vals = eig.eigenvalues.map(|v| c(v.max(0.0), 0.0));
    let v = eig.eigenvectors;
    v * Mat4::from_diagonal(&vals) * v.adjoint()
}

/// Nearest (Frobenius) Hermitian, trace-preserving, positive semidefinite
/// `χ`, by Dykstra's alternating projections between the TP affine subspace
/// and the PSD cone.
pub fn project_cptp(chi: &Mat4) -> (Mat4, usize, bool) {
    let tp = TpProjector::new();
    let mut x = (chi + chi.adjoint()) * c(0.5, 0.0);
    let mut p = Mat4::zeros();
    let mut q = Mat4::zeros();
    for it in 1..=200_000 {
        let y = tp.project(&(x + p));
        p = x + p - y;
        let x_new = project_psd(&(y + q));
        q = y + q - x_new;
        let change = (x_new - x).norm();
        let gap = (x_new - y).norm();
        x = x_new;
        if change < 1e-12 && gap < 1e-10 {
            return (x, it, true);
        }
    }
    (x, 200_000, false)
}

/// Reconstructs each output state and the process from per-input count
/// records, inputs and records in the same order.
pub fn reconstruct_process(
    inputs: &[PolarizationState],
    data: &[TomographyData],
) -> Result<(Vec<DensityMatrixEstimate>, ProcessTomography)> {
    if inputs.len() != data.len() {
        return Err(Error::InvalidInput("one count record per input state required".into()));
    }
    let estimates = data.par_iter().map(mle_state).collect::<Result<Vec<_>>>()?;
    let outputs: Vec<PolarizationState> = estimates.iter().map(|e| e.rho_hat.clone()).collect();
    let process = process_tomography(inputs, &outputs)?;
    Ok((estimates, process))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessErrors {
    pub resamples: usize,
    pub chi00_mean: f64,
    pub chi00_std: f64,
}

/// Poisson bootstrap of the projected `χ00` through the whole chain.
pub fn process_errors(
    inputs: &[PolarizationState],
    data: &[TomographyData],
    resamples: usize,
    seed: u64,
) -> Result<ProcessErrors> {
    if resamples < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 resamples, got {resamples}")));
    }
    let draws: Vec<f64> = (0..resamples)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let resampled: Vec<TomographyData> = data
                .iter()
                .map(|d| {
                    let counts: Vec<u64> = d
                        .entries
                        .iter()
                        .map(|e| {
                            if e.counts == 0 {
                                0
                            } else {
                                Poisson::new(e.counts as f64).unwrap().sample(&mut rng) as u64
                            }
                        })
                        .collect();
                    d.with_counts(&counts)
                })
                .collect();
            let outputs: Vec<PolarizationState> =
                resampled.iter().map(|d| mle_state(d).map(|e| e.rho_hat)).collect::<Result<_>>().ok()?;
            Some(process_tomography(inputs, &outputs).ok()?.projected.chi00())
        })
        .collect();
    if draws.len() < 2 {
        return Err(Error::Estimation("too few successful resamples".into()));
    }
    let (chi00_mean, chi00_std) = sample_std(&draws);
    Ok(ProcessErrors { resamples: draws.len(), chi00_mean, chi00_std })
}

/// `row,col,re,im` for the 16 entries, after a `#` line stating whether the
/// CP-TP projection was applied.
pub fn write_chi_csv<W: Write>(chi: &Mat4, projected: bool, mut out: W) -> io::Result<()> {
    writeln!(out, "# projection_applied: {}", if projected { "yes" } else { "no" })?;
    writeln!(out, "row,col,re,im")?;
    for k in 0..4 {
        for l in 0..4 {
            let z = chi[(k, l)];
            writeln!(out, "{k},{l},{:.12},{:.12}", z.re, z.im)?;
        }
    }
    Ok(())
}

/// Least-squares diagonal Pauli channel `diag(p_I, p_X, p_Y, p_Z)`, with
/// `Σ p = 1`, reproducing the given per-state fidelities. For a pure input with
/// Bloch vector `r`, the channel fidelity is `p_I + Σ_k p_k r_k²`.
pub fn fit_pauli_channel(observations: &[(PolarizationState, f64)]) -> Result<ProcessMatrix> {
    if observations.len() < 3 {
        return Err(Error::InvalidInput("need at least three states to fit a Pauli channel".into()));
    }
    // Unknowns (p_I, p_X, p_Y) with p_Z = 1 − p_I − p_X − p_Y.
    let mut a = DMatrix::<f64>::zeros(observations.len(), 3);
    let mut b = DMatrix::<f64>::zeros(observations.len(), 1);
    for (i, (state, f)) in observations.iter().enumerate() {
        let r = state.bloch();
        let (x2, y2, z2) = (r[0] * r[0], r[1] * r[1], r[2] * r[2]);
        a[(i, 0)] = 1.0 - z2;
        a[(i, 1)] = x2 - z2;
        a[(i, 2)] = y2 - z2;
        b[(i, 0)] = f - z2;
    }
    let sol = a.clone().svd(true, true).solve(&b, 1e-12).map_err(|e| Error::Degenerate(e.to_string()))?;
    let (pi, px, py) = (sol[(0, 0)], sol[(1, 0)], sol[(2, 0)]);
    Ok(ProcessMatrix::diagonal([pi, px, py, 1.0 - pi - px - py]))
}
