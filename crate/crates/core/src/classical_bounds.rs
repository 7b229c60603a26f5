//! Best fidelities reachable by classical measure-and-prepare devices fed
//! with phase-randomized weak coherent states, used to certify that a
//! measured memory fidelity is non-classical.
//!
//! Three bounds are provided, each tighter for the classical device than the
//! previous one:
//!
//! * the photon-number mixture of the `(n+1)/(n+2)` single-copy optimum,
//!   conditioned on at least one photon;
//! * the threshold strategy, which only answers when the photon number is
//!   large enough and is tuned to emit as often as the memory does;
//! * the two-strategy device that must in addition reproduce the efficiency
//!   and fidelity of the light transmitted through the memory.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAIL_REL: f64 = 1e-15;
const MAX_PHOTONS: usize = 500;
const SERIES_SWITCH_MU: f64 = 1e-4;

/// Optimal measure-and-prepare fidelity for `n` identical copies of a qubit.
pub fn massar_popescu(n: u32) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidInput("photon number must be at least 1".into()));
    }
    let n = f64::from(n);
    Ok((n + 1.0) / (n + 2.0))
}

fn mp(n: usize) -> f64 {
    (n as f64 + 1.0) / (n as f64 + 2.0)
}

/// Poisson probabilities `P(μ, n)` and upper tails `Σ_{m≥n} P(μ, m)`,
/// truncated where `P(μ, n) < 1e-15 · max P`, at most 500 photons.
#[derive(Clone, Debug)]
struct PoissonTable {
    probs: Vec<f64>,
    tails: Vec<f64>,
}

impl PoissonTable {
    fn new(mu: f64) -> Self {
        let ln_mu = mu.ln();
        let mut probs = Vec::with_capacity(64);
        let mut ln_fact = 0.0;
        let mut max_p: f64 = 0.0;
        for n in 0..=MAX_PHOTONS {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            let p = if n == 0 { (-mu).exp() } else { (-mu + n as f64 * ln_mu - ln_fact).exp() };
            max_p = max_p.max(p);
            probs.push(p);
            if n as f64 > mu && p < TAIL_REL * max_p {
                break;
            }
        }
        let mut tails = vec![0.0; probs.len() + 1];
        for n in (0..probs.len()).rev() {
            tails[n] = tails[n + 1] + probs[n];
        }
        // Tail from one photon on, exact rather than summed.
        tails[1] = -(-mu).exp_m1();
        Self { probs, tails }
    }

    fn tail(&self, n: usize) -> f64 {
        self.tails.get(n).copied().unwrap_or(0.0)
    }

    /// `Σ_{m≥n} (m+1)/(m+2) P(μ, m)`.
    fn weighted_tail(&self, n: usize) -> f64 {
        self.probs.iter().enumerate().skip(n).rev().map(|(m, p)| mp(m) * p).sum()
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("mean photon number {mu} must be positive")))
    }
}

/// Conditional fidelity of the plain photon-number mixture,
/// `Σ_{n≥1} (n+1)/(n+2) P(μ,n) / (1 − e^{−μ})`, in closed form. Below
/// μ = 1e-4 the Poisson series is summed instead to avoid cancellation.
pub fn poisson_conditional_bound(mu: f64) -> Result<f64> {
    check_mu(mu)?;
    if mu < SERIES_SWITCH_MU {
        // Ratio of μⁿ/n! sums; e^{−μ} cancels.
        let (mut term, mut num, mut den) = (1.0, 0.0, 0.0);
        for n in 1..40 {
            term *= mu / n as f64;
            num += mp(n) * term;
            den += term;
        }
        return Ok(num / den);
    }
    // 1 − e^{−μ} − μ + μ² = μ² − g(μ) with g accurate to full relative
    // precision, so only the O(1) terms of the bracket cancel.
    let one_minus = -(-mu).exp_m1();
    let bracket = 1.0 - exp_remainder(mu) / (mu * mu) - 0.5 * (-mu).exp();
    Ok(bracket / one_minus)
}

/// `g(μ) = e^{−μ} − 1 + μ`.
fn exp_remainder(mu: f64) -> f64 {
    if mu >= 0.5 {
        return (-mu).exp_m1() + mu;
    }
    let (mut term, mut sum) = (-mu, 0.0);
    for k in 2..30 {
        term *= -mu / k as f64;
        sum += term;
    }
    sum
}

/// Rule linking the memory efficiency `η_M` to how often the classical device
/// must emit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionMatching {
    /// `P_emit = 1 − e^{−η_M μ}`: the click probability of a coherent output
    /// of mean `η_M μ`.
    #[default]
    PhotonCounting,
    /// `P_emit = η_M (1 − e^{−μ})`: the device answers for a fraction `η_M`
    /// of the pulses that contain at least one photon.
    Conditioned,
}

impl EmissionMatching {
    pub fn emission_probability(self, mu: f64, eta_m: f64) -> f64 {
        match self {
            EmissionMatching::Conditioned => -eta_m * (-mu).exp_m1(),
            EmissionMatching::PhotonCounting => -(-eta_m * mu).exp_m1(),
        }
    }
}

/// Threshold measure-and-prepare strategy: answer for every pulse with more
/// than `n_min` photons and for a fraction of pulses with exactly `n_min`,
/// giving total emission probability `gamma + Σ_{n>n_min} P(μ, n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdStrategy {
    pub n_min: u32,
    pub gamma: f64,
    pub p_emit: f64,
    pub fidelity: f64,
    /// Requested emission exceeded the conditioned mass and was clamped.
    pub degenerate: bool,
}

fn threshold_from_table(table: &PoissonTable, p_emit: f64) -> ThresholdStrategy {
    let full = table.tail(1);
    if p_emit >= full * (1.0 - 1e-14) {
        let gamma = table.probs.get(1).copied().unwrap_or(0.0);
        let fidelity = (mp(1) * gamma + table.weighted_tail(2)) / full;
        return ThresholdStrategy {
            n_min: 1,
            gamma,
            p_emit: full,
            fidelity,
            degenerate: p_emit > full * (1.0 + 1e-12),
        };
    }
    // Largest n with tail(n) ≥ p_emit, so tail(n+1) < p_emit ≤ tail(n).
    let mut n_min = 1;
    while n_min + 1 < table.tails.len() && table.tail(n_min + 1) >= p_emit {
        n_min += 1;
    }
    let rest = table.tail(n_min + 1);
    let gamma = p_emit - rest;
    let fidelity = (gamma * mp(n_min) + table.weighted_tail(n_min + 1)) / (gamma + rest);
    ThresholdStrategy { n_min: n_min as u32, gamma, p_emit, fidelity, degenerate: false }
}

pub fn threshold_strategy(mu: f64, eta_m: f64, matching: EmissionMatching) -> Result<ThresholdStrategy> {
    check_mu(mu)?;
    if !(eta_m > 0.0 && eta_m <= 1.0) {
        return Err(Error::InvalidInput(format!("efficiency {eta_m} outside (0, 1]")));
    }
    let table = PoissonTable::new(mu);
    Ok(threshold_from_table(&table, matching.emission_probability(mu, eta_m)))
}

/// Parameters of the classical device. For the single threshold strategy
/// only `eta_m1`, `n_min` and `gamma` are meaningful and `p = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    /// Probability of choosing strategy 1 (measure everything).
    pub p: f64,
    /// Beamsplitter transmission of strategy 2.
    pub eta_bs: f64,
    /// Probability of replacing the transmitted state with white noise.
    pub q: f64,
    /// Extra loss on the strategy-1 output.
    pub delta: f64,
    pub eta_m1: f64,
    pub eta_m2: f64,
    /// Threshold of strategy 1.
    pub n_min: u32,
    pub gamma: f64,
    /// Threshold of strategy 2.
    pub n_min2: u32,
    pub gamma2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundResult {
    pub bound_fidelity: f64,
    pub argmax: StrategyParams,
    pub feasible: bool,
    pub grid_resolution: String,
    /// A sub-strategy had to clamp its emission probability.
    pub degenerate: bool,
}

/// Threshold bound with the default emission matching.
pub fn threshold_bound(mu: f64, eta_m: f64) -> Result<BoundResult> {
    threshold_bound_with(mu, eta_m, EmissionMatching::default())
}

pub fn threshold_bound_with(mu: f64, eta_m: f64, matching: EmissionMatching) -> Result<BoundResult> {
    let s = threshold_strategy(mu, eta_m, matching)?;
    Ok(BoundResult {
        bound_fidelity: s.fidelity,
        argmax: StrategyParams {
            p: 1.0,
            delta: 1.0,
            eta_m1: eta_m,
            n_min: s.n_min,
            gamma: s.gamma,
            ..Default::default()
        },
        feasible: true,
        grid_resolution: "closed form".into(),
        degenerate: s.degenerate,
    })
}

/// Search settings for the transmitted-state bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub matching: EmissionMatching,
    /// Coarse points per axis (η_M⁽¹⁾ log-spaced, δ and q linear).
    pub grid_points: usize,
    pub eta_m1_min: f64,
    /// Refinement rounds around the best coarse cell.
    pub refine_levels: usize,
    pub refine_points: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            matching: EmissionMatching::default(),
            grid_points: 60,
            eta_m1_min: 1e-4,
            refine_levels: 4,
            refine_points: 21,
        }
    }
}

impl SearchOptions {
    fn describe(&self) -> String {
        format!(
            "coarse {n}x{n}x{n} (eta_m1 log [{:e}, 1], delta and q linear [0, 1]) + {} refinements of {r}^3",
            self.eta_m1_min,
            self.refine_levels,
            n = self.grid_points,
            r = self.refine_points
        )
    }
}

/// Problem data shared by all candidate evaluations.
struct TransmittedProblem {
    mu: f64,
    f_t: f64,
    eta_t: f64,
    eta_m: f64,
    matching: EmissionMatching,
    table: PoissonTable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    value: f64,
    params: StrategyParams,
    degenerate: bool,
}

impl Candidate {
    fn key(&self) -> (f64, f64, f64) {
        (self.params.eta_m1, self.params.delta, self.params.q)
    }

    /// Higher value wins; ties go to the lexicographically smaller
    /// (η_M⁽¹⁾, δ, q).
    fn better(self, other: Candidate) -> Candidate {
        if self.value > other.value || (self.value == other.value && self.key() < other.key()) {
            self
        } else {
            other
        }
    }
}

fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.better(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

impl TransmittedProblem {
    fn strategy1(&self, eta_m1: f64) -> ThresholdStrategy {
        threshold_from_table(&self.table, self.matching.emission_probability(self.mu, eta_m1))
    }

    /// Output fidelity for one parameter triple, `None` when the implied
    /// `p`, `η` or `η_M⁽²⁾` is unphysical.
    fn evaluate(&self, eta_m1: f64, s1: &ThresholdStrategy, delta: f64, q: f64) -> Option<Candidate> {
        let h = 0.5 * (1.0 + q);
        let p = if (h - self.f_t).abs() < 1e-15 {
            0.0
        } else {
            let den = h - s1.fidelity;
            if den.abs() < 1e-15 {
                return None;
            }
            self.eta_t / eta_m1 * (h - self.f_t) / den
        };
        if !(0.0..1.0 - 1e-12).contains(&p) {
            return None;
        }
        let eta = (self.eta_t - p * eta_m1) / (1.0 - p);
        if !(0.0..1.0).contains(&eta) {
            return None;
        }
        let reflected = (1.0 - p) * (1.0 - eta);
        let eta_m2 = (self.eta_m - p * delta * eta_m1) / reflected;
        if !(eta_m2 > 0.0 && eta_m2 <= 1.0) {
            return None;
        }
        let mu2 = (1.0 - eta) * self.mu;
        let table2 = PoissonTable::new(mu2);
        let s2 = threshold_from_table(&table2, self.matching.emission_probability(mu2, eta_m2));
        let value = (p * delta * eta_m1 * s1.fidelity + reflected * eta_m2 * s2.fidelity) / self.eta_m;
        Some(Candidate {
            value,
            params: StrategyParams {
                p,
                eta_bs: eta,
                q,
                delta,
                eta_m1,
                eta_m2,
                n_min: s1.n_min,
                gamma: s1.gamma,
                n_min2: s2.n_min,
                gamma2: s2.gamma,
            },
            degenerate: s1.degenerate || s2.degenerate,
        })
    }

    /// Strategy 2 only: `p = 0`, `q = 2F_t − 1`, `η = η_t`.
    fn fallback(&self) -> Option<Candidate> {
        let q = 2.0 * self.f_t - 1.0;
        let s1 = self.strategy1(1.0);
        self.evaluate(1.0, &s1, 0.0, q)
    }

    fn search(&self, eta_axis: &[f64], delta_axis: &[f64], q_axis: &[f64]) -> Option<(Candidate, [usize; 3])> {
        eta_axis
            .par_iter()
            .enumerate()
            .map(|(i, &eta_m1)| {
                let s1 = self.strategy1(eta_m1);
                let mut best: Option<(Candidate, [usize; 3])> = None;
                for (j, &delta) in delta_axis.iter().enumerate() {
                    for (k, &q) in q_axis.iter().enumerate() {
                        if let Some(c) = self.evaluate(eta_m1, &s1, delta, q) {
                            best = match best {
                                Some((b, idx)) if b.better(c) == b => Some((b, idx)),
                                _ => Some((c, [i, j, k])),
                            };
                        }
                    }
                }
                best
            })
            .reduce(
                || None,
                |a, b| match (a, b) {
                    (Some(a), Some(b)) => Some(if a.0.better(b.0) == a.0 { a } else { b }),
                    (a, None) => a,
                    (None, b) => b,
                },
            )
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

fn neighbours(axis: &[f64], i: usize) -> (f64, f64) {
    (axis[i.saturating_sub(1)], axis[(i + 1).min(axis.len() - 1)])
}

/// Bound for a classical device that must also reproduce the transmitted
/// light (efficiency `eta_t`, fidelity `f_t`) while emitting with the
/// memory efficiency `eta_m`.
pub fn transmitted_constrained_bound(mu: f64, f_t: f64, eta_t: f64, eta_m: f64) -> Result<BoundResult> {
    transmitted_constrained_bound_with(mu, f_t, eta_t, eta_m, &SearchOptions::default())
}

pub fn transmitted_constrained_bound_with(
    mu: f64,
    f_t: f64,
    eta_t: f64,
    eta_m: f64,
    opts: &SearchOptions,
) -> Result<BoundResult> {
    check_mu(mu)?;
    if !(0.5..=1.0).contains(&f_t) {
        return Err(Error::InvalidInput(format!("transmitted fidelity {f_t} outside [1/2, 1]")));
    }
    for (name, v) in [("eta_t", eta_t), ("eta_m", eta_m)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidInput(format!("{name} = {v} outside (0, 1]")));
        }
    }
    if eta_t + eta_m > 1.0 {
        return Err(Error::InvalidInput("eta_t + eta_m exceeds 1".into()));
    }
    if opts.grid_points < 2 || opts.refine_points < 3 || !(opts.eta_m1_min > 0.0 && opts.eta_m1_min < 1.0) {
        return Err(Error::InvalidInput("search grid too small".into()));
    }
    let problem = TransmittedProblem { mu, f_t, eta_t, eta_m, matching: opts.matching, table: PoissonTable::new(mu) };
    let seed = problem.fallback().ok_or_else(|| Error::Degenerate("strategy-2 fallback infeasible".into()))?;

    let mut eta_axis = logspace(opts.eta_m1_min, 1.0, opts.grid_points);
    let mut delta_axis = linspace(0.0, 1.0, opts.grid_points);
    let mut q_axis = linspace(0.0, 1.0, opts.grid_points);
    // p = 0 needs q exactly at 2F_t − 1.
    q_axis.push(2.0 * f_t - 1.0);
    q_axis.sort_by(f64::total_cmp);

    let mut best = Some(seed);
    for level in 0..=opts.refine_levels {
        let Some((found, [i, j, k])) = problem.search(&eta_axis, &delta_axis, &q_axis) else { break };
        best = pick(best, Some(found));
        if level == opts.refine_levels {
            break;
        }
        let (e0, e1) = neighbours(&eta_axis, i);
        let (d0, d1) = neighbours(&delta_axis, j);
        let (q0, q1) = neighbours(&q_axis, k);
        eta_axis = logspace(e0, e1, opts.refine_points);
        delta_axis = linspace(d0, d1, opts.refine_points);
        q_axis = linspace(q0, q1, opts.refine_points);
    }
    let best = best.expect("seeded");
    Ok(BoundResult {
        bound_fidelity: best.value,
        argmax: best.params,
        feasible: true,
        grid_resolution: opts.describe(),
        degenerate: best.degenerate,
    })
}

/// Value of the strategy-2-only device (`p = 0`), always feasible.
pub fn fallback_bound(mu: f64, f_t: f64, eta_t: f64, eta_m: f64, matching: EmissionMatching) -> Result<f64> {
    check_mu(mu)?;
    let problem = TransmittedProblem { mu, f_t, eta_t, eta_m, matching, table: PoissonTable::new(mu) };
    problem.fallback().map(|c| c.value).ok_or_else(|| Error::Degenerate("strategy-2 fallback infeasible".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Quantum,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Quantum => "quantum",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Quantum iff `measured_f − measured_err > bound`.
pub fn quantumness_verdict(measured_f: f64, measured_err: f64, bound: f64) -> Verdict {
    quantumness_verdict_k(measured_f, measured_err, bound, 1.0)
}

/// Quantum iff `measured_f − k·measured_err > bound`.
pub fn quantumness_verdict_k(measured_f: f64, measured_err: f64, bound: f64, k: f64) -> Verdict {
    debug_assert!(measured_err >= 0.0);
    if measured_f - k * measured_err > bound {
        Verdict::Quantum
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurvePoint {
    pub mu: f64,
    pub plain: f64,
    pub threshold: f64,
    pub transmitted: f64,
    pub argmax: StrategyParams,
}

pub fn bound_curve(
    mus: &[f64],
    f_t: f64,
    eta_t: f64,
    eta_m: f64,
    opts: &SearchOptions,
) -> Result<Vec<BoundCurvePoint>> {
    mus.iter()
        .map(|&mu| {
            let t = transmitted_constrained_bound_with(mu, f_t, eta_t, eta_m, opts)?;
            Ok(BoundCurvePoint {
                mu,
                plain: poisson_conditional_bound(mu)?,
                threshold: threshold_bound_with(mu, eta_m, opts.matching)?.bound_fidelity,
                transmitted: t.bound_fidelity,
                argmax: t.argmax,
            })
        })
        .collect()
}

/// CSV with the three bounds and the optimal strategy parameters.
pub fn write_bound_csv<W: Write>(points: &[BoundCurvePoint], mut out: W) -> io::Result<()> {
    writeln!(out, "mu,plain_bound,threshold_bound,transmitted_bound,p,eta_bs,q,delta,eta_m1,eta_m2,n_min1,n_min2")?;
    for pt in points {
        let a = &pt.argmax;
        writeln!(
            out,
            "{},{:.10},{:.10},{:.10},{:.6},{:.6},{:.6},{:.6},{:.6e},{:.6e},{},{}",
            pt.mu,
            pt.plain,
            pt.threshold,
            pt.transmitted,
            a.p,
            a.eta_bs,
            a.q,
            a.delta,
            a.eta_m1,
            a.eta_m2,
            a.n_min,
            a.n_min2
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn massar_popescu_values() {
        assert!((massar_popescu(1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((massar_popescu(2).unwrap() - 0.75).abs() < 1e-15);
        assert!(massar_popescu(1_000_000).unwrap() > 0.999_99);
        assert!(massar_popescu(0).is_err());
    }

    #[test]
    fn plain_bound_small_mu_and_errors() {
        assert!((poisson_conditional_bound(1e-6).unwrap() - 2.0 / 3.0).abs() < 1e-6);
        assert!(poisson_conditional_bound(0.0).is_err());
        assert!(poisson_conditional_bound(-1.0).is_err());
        // Both branches agree at the switch point.
        let below = poisson_conditional_bound(SERIES_SWITCH_MU * (1.0 - 1e-9)).unwrap();
        let above = poisson_conditional_bound(SERIES_SWITCH_MU).unwrap();
        assert!((below - above).abs() < 1e-10);
    }

    #[test]
    fn full_efficiency_threshold_equals_plain() {
        for m in [EmissionMatching::Conditioned, EmissionMatching::PhotonCounting] {
            for mu in [0.3, 1.4, 5.0] {
                let t = threshold_bound_with(mu, 1.0, m).unwrap();
                let plain = poisson_conditional_bound(mu).unwrap();
                assert!((t.bound_fidelity - plain).abs() < 1e-12, "{m:?} {mu}");
                assert_eq!(t.argmax.n_min, 1);
            }
        }
    }

    #[test]
    fn threshold_matches_hand_evaluation() {
        // μ = 1.4, η_M = 0.0385, conditioned matching.
        let mu: f64 = 1.4;
        let p = |n: i32| (-mu).exp() * mu.powi(n) / (1..=n).map(f64::from).product::<f64>();
        let emit = 0.0385 * (1.0 - (-mu).exp());
        let tail5: f64 = (5..60).map(p).sum();
        assert!(tail5 < emit && emit <= tail5 + p(4));
        let gamma = emit - tail5;
        let num = gamma * 5.0 / 6.0 + (5..60).map(|n| (n as f64 + 1.0) / (n as f64 + 2.0) * p(n)).sum::<f64>();
        let s = threshold_strategy(mu, 0.0385, EmissionMatching::Conditioned).unwrap();
        assert_eq!(s.n_min, 4);
        assert!((s.gamma - gamma).abs() < 1e-14);
        assert!((s.fidelity - num / emit).abs() < 1e-12);
    }

    #[test]
    fn threshold_beats_plain_at_low_efficiency() {
        let t = threshold_bound(1.4, 0.0385).unwrap().bound_fidelity;
        assert!(t > poisson_conditional_bound(1.4).unwrap());
    }

    #[test]
    fn threshold_tends_to_two_thirds() {
        // The excess over 2/3 scales as μ/(24 η_M).
        let t = threshold_bound_with(1e-3, 0.1, EmissionMatching::PhotonCounting).unwrap().bound_fidelity;
        assert!((t - 2.0 / 3.0).abs() < 1e-3);
        let t = threshold_bound(1e-3, 0.0385).unwrap().bound_fidelity;
        assert!((t - 2.0 / 3.0).abs() < 1.2e-3);
        let t = threshold_bound(1e-4, 0.0385).unwrap().bound_fidelity;
        assert!((t - 2.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn threshold_rejects_bad_inputs() {
        assert!(threshold_bound(0.0, 0.1).is_err());
        assert!(threshold_bound(1.0, 0.0).is_err());
        assert!(threshold_bound(1.0, 1.5).is_err());
    }

    #[test]
    fn fallback_is_strategy_two_threshold() {
        let (mu, f_t, eta_t, eta_m) = (1.4, 0.972, 0.296, 0.0385);
        for m in [EmissionMatching::Conditioned, EmissionMatching::PhotonCounting] {
            let fb = fallback_bound(mu, f_t, eta_t, eta_m, m).unwrap();
            let direct = threshold_bound_with((1.0 - eta_t) * mu, eta_m / (1.0 - eta_t), m).unwrap().bound_fidelity;
            assert!((fb - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn optimizer_never_below_seed_or_two_thirds() {
        let opts = SearchOptions { grid_points: 20, refine_levels: 2, refine_points: 7, ..SearchOptions::default() };
        for mu in [0.2, 0.8, 1.4, 3.6] {
            let r = transmitted_constrained_bound_with(mu, 0.972, 0.296, 0.0385, &opts).unwrap();
            let fb = fallback_bound(mu, 0.972, 0.296, 0.0385, opts.matching).unwrap();
            assert!(r.bound_fidelity >= fb);
            assert!(r.bound_fidelity >= 2.0 / 3.0);
            assert!(r.feasible);
        }
    }

    #[test]
    fn verdicts() {
        assert_eq!(quantumness_verdict(0.5, 0.0, 2.0 / 3.0), Verdict::Inconclusive);
        assert_eq!(quantumness_verdict(0.9, 0.01, 0.8), Verdict::Quantum);
        assert_eq!(quantumness_verdict(0.81, 0.01, 0.8), Verdict::Inconclusive);
        assert_eq!(quantumness_verdict_k(0.83, 0.01, 0.8, 3.0), Verdict::Inconclusive);
    }
}
