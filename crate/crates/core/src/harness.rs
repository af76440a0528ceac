//! Convergence and minimal-radius experiments.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cross::build_cross;
use crate::error::{Error, Result};
use crate::lowerbound::{
    build_witness_pair, derivative_l2_norm, min_n_for_delta, parity_variants,
    verify_lower_bound_c, verify_lower_bound_l2, witness_lp_distance, LowerBoundReport, SelectionReport,
    WitnessConstants,
};
use crate::noise::{lp_norm, perturb, LpExponent, NoiseMode, NoiseSpec, WitnessNoise, RNG_ALGORITHM};
use crate::quadrature::compute_coeff_grid;
use crate::spectral::{
    class_norm, mixed_derivative_coeffs, parseval_l2_norm, sup_norm_on_grid, ClassParams, CoeffGrid,
    DEFAULT_SUP_RESOLUTION,
};
use crate::truncation::{
    apply_method, select_parameters, select_parameters_with_gamma, theoretical_error_exponent, MethodParams,
    Metric, RateClass, Selection, SelectionInput,
};

/// Signs attached to the synthetic coefficient magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignPattern {
    /// Independent fair signs drawn from the seed.
    Random,
    /// All coefficients positive.
    Coherent,
}

impl FromStr for SignPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "coherent" => Ok(Self::Coherent),
            _ => Err(Error::Parameter(format!("unknown sign pattern {s:?}; expected random or coherent"))),
        }
    }
}

/// Coefficient magnitude profile of a synthetic class function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecayProfile {
    /// `A (max(1,k) max(1,j))^{-mu-1/s-epsilon}` on `0..=k_ref` squared.
    Boundary { epsilon: f64, k_ref: usize, signs: SignPattern },
    /// A single coefficient at `(k, j)`.
    SingleIndex { k: usize, j: usize },
}

/// Returns a grid on the boundary of the unit class ball (`class_norm = 1`).
pub fn synthesize_class_function(class: ClassParams, profile: DecayProfile, seed: u64) -> Result<CoeffGrid> {
    match profile {
        DecayProfile::SingleIndex { k, j } => {
            let weight = (k.max(1) * j.max(1)) as f64;
            let mut g = CoeffGrid::new();
            g.insert(k, j, weight.powf(-class.mu))?;
            Ok(g)
        }
        DecayProfile::Boundary { epsilon, k_ref, signs } => {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::Parameter(format!("decay margin epsilon = {epsilon} must be > 0")));
            }
            let exponent = -class.mu - 1.0 / class.s - epsilon;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut g = CoeffGrid::new();
            for k in 0..=k_ref {
                for j in 0..=k_ref {
                    let magnitude = ((k.max(1) * j.max(1)) as f64).powf(exponent);
                    let sign = match signs {
                        SignPattern::Coherent => 1.0,
                        SignPattern::Random if rng.next_u64() >> 63 == 0 => 1.0,
                        SignPattern::Random => -1.0,
                    };
                    g.insert(k, j, sign * magnitude)?;
                }
            }
            let norm = class_norm(&g, class);
            Ok(g.scaled(1.0 / norm))
        }
    }
}

/// `sum coef t^a tau^b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub a: u32,
    pub b: u32,
}

/// Bivariate polynomial of the registry, degree at most 4 in each variable.
pub const REGISTRY_POLYNOMIAL: [Monomial; 7] = [
    Monomial { coef: 1.0, a: 0, b: 0 },
    Monomial { coef: 1.0, a: 1, b: 0 },
    Monomial { coef: -2.0, a: 0, b: 1 },
    Monomial { coef: 3.0, a: 2, b: 1 },
    Monomial { coef: 1.0, a: 3, b: 2 },
    Monomial { coef: -0.5, a: 2, b: 4 },
    Monomial { coef: 1.0, a: 4, b: 3 },
];

fn falling(n: u32, r: usize) -> f64 {
    (0..r as u32).map(|i| (n - i) as f64).product()
}

/// Value of the `(r1, r2)` mixed derivative of a monomial sum.
pub fn polynomial_derivative(terms: &[Monomial], r1: usize, r2: usize, t: f64, tau: f64) -> f64 {
    terms
        .iter()
        .filter(|m| m.a as usize >= r1 && m.b as usize >= r2)
        .map(|m| {
            m.coef
                * falling(m.a, r1)
                * falling(m.b, r2)
                * t.powi(m.a as i32 - r1 as i32)
                * tau.powi(m.b as i32 - r2 as i32)
        })
        .sum()
}

/// Test functions known by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `f = 1`.
    Constant,
    /// [`REGISTRY_POLYNOMIAL`].
    Polynomial,
    /// `exp(t + tau) / 4`.
    Exp,
    /// Synthetic class function with boundary decay.
    Boundary { epsilon: f64, signs: SignPattern },
}

pub const REGISTRY_NAMES: [&str; 4] = ["constant", "polynomial", "exp", "boundary"];

impl TestFunction {
    /// Looks up a registry name; `boundary` gets `epsilon = 0.01` and random signs.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "constant" => Ok(Self::Constant),
            "polynomial" => Ok(Self::Polynomial),
            "exp" => Ok(Self::Exp),
            "boundary" => Ok(Self::Boundary { epsilon: 0.01, signs: SignPattern::Random }),
            _ => Err(Error::Parameter(format!(
                "unknown test function {name:?}; known: {}",
                REGISTRY_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Polynomial => "polynomial",
            Self::Exp => "exp",
            Self::Boundary { .. } => "boundary",
        }
    }

    /// Pointwise value, for functions given in closed form.
    pub fn eval(&self, t: f64, tau: f64) -> Option<f64> {
        match self {
            Self::Constant => Some(1.0),
            Self::Polynomial => Some(polynomial_derivative(&REGISTRY_POLYNOMIAL, 0, 0, t, tau)),
            Self::Exp => Some((t + tau).exp() / 4.0),
            Self::Boundary { .. } => None,
        }
    }

    /// Pointwise mixed derivative, for functions given in closed form.
    pub fn derivative(&self, r1: usize, r2: usize, t: f64, tau: f64) -> Option<f64> {
        match self {
            Self::Constant => Some(if r1 + r2 == 0 { 1.0 } else { 0.0 }),
            Self::Polynomial => Some(polynomial_derivative(&REGISTRY_POLYNOMIAL, r1, r2, t, tau)),
            Self::Exp => Some((t + tau).exp() / 4.0),
            Self::Boundary { .. } => None,
        }
    }

    /// Coefficients up to degree `k_ref` in each variable, with the default
    /// `k_ref + 2` quadrature points per axis.
    pub fn coefficients(&self, class: ClassParams, k_ref: usize, seed: u64) -> Result<CoeffGrid> {
        self.coefficients_with_order(class, k_ref, k_ref + 2, seed)
    }

    /// Like [`TestFunction::coefficients`] with `m` quadrature points per
    /// axis. The constant function returns its exact single term. Other
    /// closed-form functions go through the tensor rule, and entries at
    /// rounding level (below `1e-13` of the largest) are dropped.
    pub fn coefficients_with_order(&self, class: ClassParams, k_ref: usize, m: usize, seed: u64) -> Result<CoeffGrid> {
        if m < k_ref + 2 {
            return Err(Error::Parameter(format!(
                "quadrature order {m} must be at least max degree + 2 = {}",
                k_ref + 2
            )));
        }
        match *self {
            Self::Boundary { epsilon, signs } => {
                synthesize_class_function(class, DecayProfile::Boundary { epsilon, k_ref, signs }, seed)
            }
            // 1 = 2 phi_0(t) phi_0(tau)
            Self::Constant => CoeffGrid::from_entries([((0, 0), 2.0)]),
            f => {
                let g = compute_coeff_grid(move |t, tau| f.eval(t, tau).unwrap_or(0.0), k_ref, m)?;
                let top = g.iter().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
                Ok(g.pruned(1e-13 * top))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    L2,
    C,
    Both,
}

impl FromStr for MetricChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" => Ok(Self::L2),
            "c" => Ok(Self::C),
            "both" => Ok(Self::Both),
            _ => Err(Error::Parameter(format!("unknown metric {s:?}; expected l2, c or both"))),
        }
    }
}

impl fmt::Display for MetricChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L2 => "l2",
            Self::C => "c",
            Self::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseChoice {
    Sphere,
    Single,
    Witness,
    Off,
}

impl FromStr for NoiseChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sphere" | "random-sphere" => Ok(Self::Sphere),
            "single" | "single-coefficient" => Ok(Self::Single),
            "witness" | "adversarial-witness" => Ok(Self::Witness),
            "off" | "none" => Ok(Self::Off),
            _ => Err(Error::Parameter(format!("unknown noise mode {s:?}; expected sphere, single, witness or off"))),
        }
    }
}

impl fmt::Display for NoiseChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sphere => "sphere",
            Self::Single => "single",
            Self::Witness => "witness",
            Self::Off => "off",
        })
    }
}

/// Geometric sequence from `start` to `stop` with `count` terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSweep {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl DeltaSweep {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => {
                let ratio = (self.stop / self.start).ln();
                let mut v: Vec<f64> =
                    (0..n).map(|i| self.start * (ratio * i as f64 / (n - 1) as f64).exp()).collect();
                v[0] = self.start;
                v[n - 1] = self.stop;
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub class: ClassParams,
    pub r1: usize,
    pub r2: usize,
    pub p: LpExponent,
    pub metric: MetricChoice,
    pub delta_sweep: DeltaSweep,
    pub noise: NoiseChoice,
    pub seed: u64,
    /// Noise draws averaged per sweep point.
    pub repeats: usize,
    pub function: TestFunction,
    pub k_ref: usize,
    pub sup_resolution: usize,
    /// Overrides the default gamma of the selection rule.
    pub gamma: Option<f64>,
    /// Record wall time per sweep point; off keeps output reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            class: ClassParams { s: 2.0, mu: 4.0 },
            r1: 1,
            r2: 1,
            p: LpExponent::Finite(2.0),
            metric: MetricChoice::Both,
            delta_sweep: DeltaSweep { start: 1e-2, stop: 1e-6, count: 9 },
            noise: NoiseChoice::Sphere,
            seed: 0,
            repeats: 5,
            function: TestFunction::Boundary { epsilon: 0.01, signs: SignPattern::Coherent },
            k_ref: 64,
            sup_resolution: DEFAULT_SUP_RESOLUTION,
            gamma: None,
            timing: false,
        }
    }
}

/// Margin between the largest cross index and the reference cutoff or noise support.
pub const SUPPORT_MARGIN: usize = 2;

impl ExperimentConfig {
    fn selection_input(&self, delta: f64, metric: Metric) -> SelectionInput {
        SelectionInput { delta, p: self.p, class: self.class, r1: self.r1, r2: self.r2, metric }
    }

    fn metrics(&self) -> Vec<Metric> {
        match self.metric {
            MetricChoice::L2 => vec![Metric::L2],
            MetricChoice::C => vec![Metric::C],
            MetricChoice::Both => vec![Metric::L2, Metric::C],
        }
    }

    /// `(n, gamma)` for one sweep point.
    pub fn select(&self, delta: f64) -> Result<Selection> {
        let mut picks = Vec::new();
        for metric in self.metrics() {
            let input = self.selection_input(delta, metric);
            picks.push(match self.gamma {
                Some(g) => select_parameters_with_gamma(&input, g)?,
                None => select_parameters(&input)?,
            });
        }
        let first = picks[0].clone();
        if let Some(other) = picks.get(1) {
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
            if !close(first.n, other.n) || !close(first.gamma, other.gamma) {
                return Err(Error::Parameter(format!(
                    "metric both needs one parameter choice, but L2 selects (n = {}, gamma = {}) and C selects (n = {}, gamma = {})",
                    first.n, first.gamma, other.n, other.gamma
                )));
            }
        }
        Ok(first)
    }

    /// Noise for one draw at `delta`; `None` when noise is off. Witness noise
    /// widens `base_support` to fit its band.
    pub fn noise_spec(&self, delta: f64, seed: u64, base_support: usize) -> Result<Option<NoiseSpec>> {
        let (mode, support) = match self.noise {
            NoiseChoice::Off => return Ok(None),
            NoiseChoice::Sphere => (NoiseMode::RandomSphere, base_support),
            NoiseChoice::Single => (NoiseMode::SingleCoefficient { index: None }, base_support),
            NoiseChoice::Witness => {
                let w = WitnessNoise { r1: self.r1, r2: self.r2, class: self.class, n: None };
                let n = (min_n_for_delta(delta, self.p, self.class, self.r2)?.ceil() as usize).max(self.r1);
                (NoiseMode::AdversarialWitness(w), base_support.max(3 * n + self.r1))
            }
        };
        Ok(Some(NoiseSpec { p: self.p, delta, mode, seed, support }))
    }

    /// Field-level problems, one `field: message` entry each. Empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ClassParams { s, mu } = self.class;
        if !(s >= 1.0 && s.is_finite()) {
            out.push(format!("s: {s} must be finite and >= 1"));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            out.push(format!("mu: {mu} must be finite and > 0"));
        }
        if self.r2 < 1 {
            out.push("r2: must be >= 1".into());
        }
        if self.r1 < self.r2 {
            out.push(format!("r1: {} must be >= r2 = {}", self.r1, self.r2));
        }
        let sweep = self.delta_sweep;
        if sweep.count == 0 {
            out.push("delta_count: must be >= 1".into());
        }
        if !(sweep.start > 0.0 && sweep.start < 1.0) {
            out.push(format!("delta_start: {} must lie in (0, 1)", sweep.start));
        }
        if !(sweep.stop > 0.0 && sweep.stop < 1.0) {
            out.push(format!("delta_stop: {} must lie in (0, 1)", sweep.stop));
        }
        if sweep.count > 1 && !(sweep.start > sweep.stop) {
            out.push(format!("delta_start: {} must exceed delta_stop = {}", sweep.start, sweep.stop));
        }
        if self.repeats == 0 {
            out.push("repeats: must be >= 1".into());
        }
        if self.sup_resolution < 2 {
            out.push(format!("sup_resolution: {} must be >= 2", self.sup_resolution));
        }
        if let TestFunction::Boundary { epsilon, .. } = self.function {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                out.push(format!("epsilon: {epsilon} must be > 0"));
            }
        }
        if let Some(g) = self.gamma {
            if !(g >= 1.0 && g.is_finite()) {
                out.push(format!("gamma: {g} must be finite and >= 1"));
            }
        }
        if !out.is_empty() {
            return out;
        }
        for delta in sweep.values() {
            match self.select(delta) {
                Ok(sel) => match build_cross(sel.n, sel.gamma, self.r1, self.r2) {
                    Ok(cross) => {
                        if let Some((mk, mj)) = cross.max_extents() {
                            if mk.max(mj) + SUPPORT_MARGIN > self.k_ref {
                                out.push(format!(
                                    "k_ref: {} is below the largest cross index {} plus margin {SUPPORT_MARGIN} (delta = {delta:e})",
                                    self.k_ref,
                                    mk.max(mj)
                                ));
                                break;
                            }
                        }
                    }
                    Err(e) => {
                        out.push(format!("delta_stop: {e}"));
                        break;
                    }
                },
                // reported when the study runs, with its own exit class
                Err(Error::Admissibility(_)) => break,
                Err(e) => {
                    out.push(format!("metric: {e}"));
                    break;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub delta: f64,
    pub n: f64,
    pub gamma: f64,
    pub cross_card: usize,
    pub error_l2: f64,
    pub error_c: f64,
    pub noise_norm: f64,
    pub wall_ms: u64,
    pub noise_support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the log residuals.
    pub residual: f64,
    /// Leading (largest-x) points left out of the fit.
    pub dropped: usize,
}

/// Least-squares fit of `ln y = slope ln x + intercept`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::Parameter(format!("a rate fit needs at least 2 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::Parameter(format!("rate fit needs positive finite values, got ({x}, {y})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("rate fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (logs.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / m).sqrt();
    Ok(FitResult { slope, intercept, residual, dropped: 0 })
}

/// Residual above which the two largest-`x` points are treated as pre-asymptotic.
pub const PREASYMPTOTIC_RESIDUAL: f64 = 0.1;
/// Points needed before an exponent is reported.
pub const MIN_FIT_POINTS: usize = 4;

/// Fit on points sorted by decreasing `x`, dropping the first two when the
/// residual exceeds [`PREASYMPTOTIC_RESIDUAL`] and enough points remain.
/// Returns `None` with fewer than [`MIN_FIT_POINTS`] points or non-positive values.
pub fn fit_asymptotic_rate(points: &[(f64, f64)]) -> Option<FitResult> {
    if points.len() < MIN_FIT_POINTS {
        return None;
    }
    let full = fit_rate(points).ok()?;
    if full.residual > PREASYMPTOTIC_RESIDUAL && points.len() - 2 >= MIN_FIT_POINTS {
        let mut tail = fit_rate(&points[2..]).ok()?;
        tail.dropped = 2;
        return Some(tail);
    }
    Some(full)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub case_label: String,
    pub rate: RateClass,
    pub noise_mode: String,
    pub rng_algorithm: String,
    pub records: Vec<SweepRecord>,
    pub fit_l2: Option<FitResult>,
    pub fit_c: Option<FitResult>,
    pub fitted_exponent_l2: Option<f64>,
    pub fitted_exponent_c: Option<f64>,
    pub theoretical_exponent_l2: Option<f64>,
    pub theoretical_exponent_c: Option<f64>,
}

struct PointOutcome {
    error_l2: f64,
    error_c: f64,
    noise_norm: f64,
}


/// Sweeps `delta`, applying the method with the selected `(n, gamma)` to
/// perturbed coefficients, and fits the observed error rates.
pub fn run_convergence_study(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Parameter(problems.join("; ")));
    }
    let truth = config.function.coefficients(config.class, config.k_ref, config.seed)?;
    let reference = mixed_derivative_coeffs(&truth, config.r1, config.r2);
    let deltas = config.delta_sweep.values();
    let selections: Vec<Selection> = deltas.iter().map(|&d| config.select(d)).collect::<Result<_>>()?;
    // one noise support for the whole sweep: the largest cross plus a margin
    let mut largest_extent = 0;
    for sel in &selections {
        let cross = build_cross(sel.n, sel.gamma, config.r1, config.r2)?;
        largest_extent = largest_extent.max(cross.max_extents().map_or(0, |(a, b)| a.max(b)));
    }
    let support = largest_extent + SUPPORT_MARGIN;
    let case_label = selections[0].case_label.clone();
    let rate = selections[0].rate;

    let mut records: Vec<SweepRecord> = deltas
        .par_iter()
        .zip(selections.par_iter())
        .enumerate()
        .map(|(i, (&delta, sel))| -> Result<SweepRecord> {
            let started = Instant::now();
            let cross = build_cross(sel.n, sel.gamma, config.r1, config.r2)?;
            let params = MethodParams::new(sel.n, sel.gamma, config.r1, config.r2)?;
            let repeats = if config.noise == NoiseChoice::Off { 1 } else { config.repeats };
            let mut outcomes = Vec::with_capacity(repeats);
            let mut used_support = support;
            for rep in 0..repeats {
                let seed = config.seed.wrapping_add((i * config.repeats + rep) as u64);
                let (data, noise_norm) = match config.noise_spec(delta, seed, support)? {
                    Some(spec) => {
                        used_support = spec.support;
                        let (cd, xi) = perturb(&truth, &spec)?;
                        (cd, lp_norm(&xi, config.p))
                    }
                    None => (truth.clone(), 0.0),
                };
                let diff = apply_method(&data, params)?.sub(&reference);
                outcomes.push(PointOutcome {
                    error_l2: parseval_l2_norm(&diff),
                    error_c: sup_norm_on_grid(&diff, config.sup_resolution)?,
                    noise_norm,
                });
            }
            let mean = |f: fn(&PointOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / outcomes.len() as f64;
            Ok(SweepRecord {
                delta,
                n: sel.n,
                gamma: sel.gamma,
                cross_card: cross.cardinality(),
                error_l2: mean(|o| o.error_l2),
                error_c: mean(|o| o.error_c),
                noise_norm: mean(|o| o.noise_norm),
                wall_ms: if config.timing { started.elapsed().as_millis() as u64 } else { 0 },
                noise_support: if config.noise == NoiseChoice::Off { 0 } else { used_support },
            })
        })
        .collect::<Result<_>>()?;
    records.sort_by(|a, b| b.delta.total_cmp(&a.delta));

    let fit_l2 = fit_asymptotic_rate(&records.iter().map(|r| (r.delta, r.error_l2)).collect::<Vec<_>>());
    let fit_c = fit_asymptotic_rate(&records.iter().map(|r| (r.delta, r.error_c)).collect::<Vec<_>>());
    let theory = |metric| theoretical_error_exponent(&config.selection_input(deltas[0], metric)).ok();
    let noise_mode = match config.noise {
        NoiseChoice::Off => "off".to_string(),
        _ => config.noise_spec(deltas[0], config.seed, 0)?.map_or("off", |s| s.mode.name()).to_string(),
    };
    Ok(ExperimentResult {
        config: config.clone(),
        case_label,
        rate,
        noise_mode,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        records,
        fitted_exponent_l2: fit_l2.map(|f| f.slope),
        fitted_exponent_c: fit_c.map(|f| f.slope),
        fit_l2,
        fit_c,
        theoretical_exponent_l2: theory(Metric::L2),
        theoretical_exponent_c: theory(Metric::C),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusConfig {
    pub n_sweep: Vec<usize>,
    pub class: ClassParams,
    pub r1: usize,
    pub r2: usize,
    pub p: LpExponent,
    pub sup_resolution: usize,
}

impl Default for RadiusConfig {
    fn default() -> Self {
        Self {
            n_sweep: vec![8, 16, 32, 64],
            class: ClassParams { s: 2.0, mu: 3.0 },
            r1: 1,
            r2: 1,
            p: LpExponent::Finite(2.0),
            sup_resolution: DEFAULT_SUP_RESOLUTION,
        }
    }
}

/// Smallest band size accepted by the radius study.
pub const MIN_RADIUS_N: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRadius {
    /// Half the derivative separation of the witness pair: no method can do better
    /// on both members.
    pub lower_bound: f64,
    /// Closed-form lower estimate with the explicit constant.
    pub bound_check: LowerBoundReport,
    /// Worst error of the method over the two witness scenarios, when the
    /// smoothness bound of this metric holds.
    pub method_error: Option<f64>,
    pub n_method: Option<f64>,
    pub gamma_method: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRecord {
    pub n_witness: usize,
    pub delta: f64,
    pub witness_distance: f64,
    pub class_norm_f1: f64,
    pub l2: MetricRadius,
    pub c: MetricRadius,
    pub parity: Vec<SelectionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentComparison {
    pub expected: f64,
    pub lower_bound: Option<f64>,
    pub method: Option<f64>,
    /// Both fitted and within [`EXPONENT_MATCH_TOL`] of each other.
    pub exponents_match: Option<bool>,
}

pub const EXPONENT_MATCH_TOL: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub config: RadiusConfig,
    pub constants: WitnessConstants,
    pub records: Vec<RadiusRecord>,
    pub l2: ExponentComparison,
    pub c: ExponentComparison,
    pub all_bounds_passed: bool,
}

fn method_on_witness(
    f1: &CoeffGrid,
    f2: &CoeffGrid,
    input: &SelectionInput,
    metric: Metric,
    resolution: usize,
) -> Result<Option<(f64, f64, f64)>> {
    let sel = match select_parameters(input) {
        Ok(sel) => sel,
        Err(Error::Admissibility(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let params = MethodParams::new(sel.n, sel.gamma, input.r1, input.r2)?;
    let mut worst = 0.0f64;
    // data f2 for truth f1, then data f1 for truth f2
    for (truth, data) in [(f1, f2), (f2, f1)] {
        let diff = apply_method(data, params)?.sub(&mixed_derivative_coeffs(truth, input.r1, input.r2));
        let err = match metric {
            Metric::L2 => parseval_l2_norm(&diff),
            Metric::C => sup_norm_on_grid(&diff, resolution)?,
        };
        worst = worst.max(err);
    }
    Ok(Some((worst, sel.n, sel.gamma)))
}

fn fit_in_n(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    fit_rate(points).ok().map(|f| f.slope)
}

/// For each band size `N`: build the witness pair, take `delta` equal to its
/// coefficient distance, and compare the separation it forces with the
/// error of the method at that `delta`.
pub fn run_radius_study(config: &RadiusConfig) -> Result<RadiusReport> {
    if config.n_sweep.is_empty() {
        return Err(Error::Parameter("the N sweep is empty".into()));
    }
    if let Some(&n) = config.n_sweep.iter().find(|&&n| n < MIN_RADIUS_N) {
        return Err(Error::Parameter(format!("N = {n} is below the minimum {MIN_RADIUS_N}")));
    }
    if config.r1 < config.r2 || config.r2 == 0 {
        return Err(Error::Parameter(format!(
            "derivative orders must satisfy r1 >= r2 >= 1, got ({}, {})",
            config.r1, config.r2
        )));
    }
    let ClassParams { s, mu } = config.class;
    let (r1, r2) = (config.r1, config.r2);
    let mut records: Vec<RadiusRecord> = config
        .n_sweep
        .par_iter()
        .map(|&n| -> Result<RadiusRecord> {
            let w = build_witness_pair(n, r1, r2, config.class, &BTreeSet::new())?;
            let delta = witness_lp_distance(&w, config.p);
            let metric_radius = |metric: Metric| -> Result<MetricRadius> {
                let (separation, bound_check) = match metric {
                    Metric::L2 => (derivative_l2_norm(&w.f1, r1, r2), verify_lower_bound_l2(&w)),
                    Metric::C => {
                        let sep = mixed_derivative_coeffs(&w.f1, r1, r2);
                        (sup_norm_on_grid(&sep, config.sup_resolution)?, verify_lower_bound_c(&w))
                    }
                };
                let input = SelectionInput { delta, p: config.p, class: config.class, r1, r2, metric };
                let method = if delta < 1.0 {
                    method_on_witness(&w.f1, &w.f2, &input, metric, config.sup_resolution)?
                } else {
                    None
                };
                Ok(MetricRadius {
                    lower_bound: 0.5 * separation,
                    bound_check,
                    method_error: method.map(|m| m.0),
                    n_method: method.map(|m| m.1),
                    gamma_method: method.map(|m| m.2),
                })
            };
            Ok(RadiusRecord {
                n_witness: n,
                delta,
                witness_distance: delta,
                class_norm_f1: class_norm(&w.f1, config.class),
                l2: metric_radius(Metric::L2)?,
                c: metric_radius(Metric::C)?,
                parity: parity_variants(n, r1, r2, config.class)?,
            })
        })
        .collect::<Result<_>>()?;
    records.sort_by_key(|r| r.n_witness);

    let compare = |expected: f64, pick: fn(&RadiusRecord) -> &MetricRadius| {
        let lower: Vec<(f64, f64)> =
            records.iter().map(|r| (r.n_witness as f64, pick(r).lower_bound)).filter(|p| p.1 > 0.0).collect();
        let method: Vec<(f64, f64)> = records
            .iter()
            .filter_map(|r| pick(r).method_error.map(|e| (r.n_witness as f64, e)))
            .filter(|p| p.1 > 0.0)
            .collect();
        let lower_slope = fit_in_n(&lower);
        let method_slope = if method.len() == records.len() { fit_in_n(&method) } else { None };
        ExponentComparison {
            expected,
            lower_bound: lower_slope,
            method: method_slope,
            exponents_match: match (lower_slope, method_slope) {
                (Some(a), Some(b)) => Some((a - b).abs() <= EXPONENT_MATCH_TOL),
                _ => None,
            },
        }
    };
    let r1f = r1 as f64;
    let l2 = compare(-mu + 2.0 * r1f - 1.0 / s + 0.5, |r| &r.l2);
    let c = compare(-mu + 2.0 * r1f - 1.0 / s + 1.5, |r| &r.c);
    let all_bounds_passed = records.iter().all(|r| {
        r.l2.bound_check.passed && r.c.bound_check.passed && r.class_norm_f1 <= 1.0 + 1e-12
    });
    Ok(RadiusReport {
        config: config.clone(),
        constants: crate::lowerbound::witness_constants(r1, r2, config.class),
        records,
        l2,
        c,
        all_bounds_passed,
    })
}
