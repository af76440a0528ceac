//! Hyperbolic-cross truncation of noisy coefficients followed by exact
//! differentiation, and the a-priori choice of `(n, gamma)` from `delta`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cross::build_cross;
use crate::error::{Error, Result};
use crate::noise::LpExponent;
use crate::spectral::{mixed_derivative_coeffs, restrict_to_cross, ClassParams, CoeffGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L2,
    C,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L2 => "l2",
            Self::C => "c",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" => Ok(Self::L2),
            "c" => Ok(Self::C),
            _ => Err(Error::Parameter(format!("unknown metric {s:?}; expected l2 or c"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub n: f64,
    pub gamma: f64,
    pub r1: usize,
    pub r2: usize,
}

impl MethodParams {
    pub fn new(n: f64, gamma: f64, r1: usize, r2: usize) -> Result<Self> {
        if !(r1 >= r2 && r2 >= 1) {
            return Err(Error::Parameter(format!("derivative orders must satisfy r1 >= r2 >= 1, got ({r1}, {r2})")));
        }
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!("gamma = {gamma} must be finite and >= 1")));
        }
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Parameter(format!("n = {n} must be finite and > 0")));
        }
        Ok(Self { n, gamma, r1, r2 })
    }
}

/// Coefficients of `D^{(r1,r2)}_{n,gamma}` applied to the data: restrict to
/// the cross, then differentiate.
pub fn apply_method(c_delta: &CoeffGrid, params: MethodParams) -> Result<CoeffGrid> {
    let cross = build_cross(params.n, params.gamma, params.r1, params.r2)?;
    Ok(mixed_derivative_coeffs(&restrict_to_cross(c_delta, &cross), params.r1, params.r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionInput {
    pub delta: f64,
    pub p: LpExponent,
    pub class: ClassParams,
    pub r1: usize,
    pub r2: usize,
    pub metric: Metric,
}

/// Order of the error bound at a given `gamma`, relative to the clean power
/// of `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateClass {
    Clean,
    /// Extra factor `ln^{1/2}(1/delta)`.
    LogHalf,
    /// Extra factor `ln^{1-1/s}(1/delta)`.
    LogOneMinusInvS,
    /// Extra factor `ln(1/delta)`.
    Log,
    /// Extra factor `ln^{3/2-1/s}(1/delta)`.
    LogThreeHalvesMinusInvS,
    /// Extra factor `ln^{2-1/s}(1/delta)`.
    LogTwoMinusInvS,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaSet {
    Point { gamma: f64 },
    /// `lo..hi`, open at `hi`, and open at `lo` unless `lo_closed`.
    Interval { lo: f64, hi: f64, lo_closed: bool },
}

impl GammaSet {
    pub fn contains(&self, g: f64) -> bool {
        match *self {
            Self::Point { gamma } => (g - gamma).abs() <= POINT_TOL * gamma,
            Self::Interval { lo, hi, lo_closed } => {
                let above = if lo_closed { g >= lo } else { g > lo * (1.0 + POINT_TOL) };
                above && g < hi * (1.0 - POINT_TOL)
            }
        }
    }
}

const POINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaInterval {
    pub set: GammaSet,
    pub rate: RateClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub n: f64,
    pub gamma: f64,
    pub case_label: String,
    pub rate: RateClass,
}

fn smoothness_split(input: &SelectionInput) -> (f64, f64) {
    let ClassParams { s, mu } = input.class;
    let x = mu - 2.0 * input.r2 as f64 + 1.0 / s;
    let y = mu - 2.0 * input.r1 as f64 + 1.0 / s;
    (x, y)
}

/// `mu - 1/p + 1/s`.
fn rate_denominator(input: &SelectionInput) -> f64 {
    input.class.mu - input.p.reciprocal() + 1.0 / input.class.s
}

/// Checks the smoothness bound of the chosen metric and the order constraint.
pub fn check_admissibility(input: &SelectionInput) -> Result<()> {
    if !(input.delta > 0.0 && input.delta < 1.0) {
        return Err(Error::Parameter(format!("delta = {} must lie in (0, 1)", input.delta)));
    }
    if !(input.r1 >= input.r2 && input.r2 >= 1) {
        return Err(Error::Parameter(format!(
            "derivative orders must satisfy r1 >= r2 >= 1, got ({}, {})",
            input.r1, input.r2
        )));
    }
    let ClassParams { s, mu } = input.class;
    let r1 = input.r1 as f64;
    let (bound, name) = match input.metric {
        Metric::L2 => (2.0 * r1 + 0.5 - 1.0 / s, "L2"),
        Metric::C => (2.0 * r1 - 1.0 / s + 1.5, "C"),
    };
    if !(mu > bound) {
        return Err(Error::Admissibility(format!(
            "{name} error bounds need mu > {bound}, got mu = {mu} (r1 = {}, s = {s})",
            input.r1
        )));
    }
    Ok(())
}

fn interval(lo: f64, hi: f64, lo_closed: bool) -> GammaInterval {
    GammaInterval { set: GammaSet::Interval { lo, hi, lo_closed }, rate: RateClass::Clean }
}

fn point(gamma: f64, rate: RateClass) -> GammaInterval {
    GammaInterval { set: GammaSet::Point { gamma }, rate }
}

/// All `gamma` ranges covered by the error analysis, in increasing order,
/// each tagged with its rate class.
pub fn gamma_intervals(input: &SelectionInput) -> Result<Vec<GammaInterval>> {
    check_admissibility(input)?;
    let (x, y) = smoothness_split(input);
    let (r1, r2) = (input.r1, input.r2);
    Ok(match input.metric {
        Metric::L2 if r1 == r2 => vec![point(1.0, RateClass::LogThreeHalvesMinusInvS)],
        Metric::C if r1 == r2 => vec![point(1.0, RateClass::LogTwoMinusInvS)],
        Metric::L2 => {
            let a = (x - 0.5) / (y + 0.5);
            let b = (x + 0.5) / (y + 0.5);
            let c = (x - 0.5) / (y - 0.5);
            vec![
                interval(1.0, a, true),
                point(a, RateClass::LogHalf),
                interval(a, b, false),
                point(b, RateClass::LogOneMinusInvS),
                interval(b, c, false),
                point(c, RateClass::LogHalf),
            ]
        }
        Metric::C if r1 == r2 + 1 => {
            let d = (y + 2.5) / (y + 0.5);
            let e = (y + 0.5) / (y - 1.5);
            vec![
                point(1.0, RateClass::Log),
                interval(1.0, d, false),
                point(d, RateClass::LogOneMinusInvS),
                interval(d, e, false),
                point(e, RateClass::Log),
            ]
        }
        Metric::C => {
            let a = (x - 1.5) / (y + 0.5);
            let b = (x + 0.5) / (y + 0.5);
            let c = (x - 1.5) / (y - 1.5);
            vec![
                interval(1.0, a, true),
                point(a, RateClass::Log),
                interval(a, b, false),
                point(b, RateClass::LogOneMinusInvS),
                interval(b, c, false),
                point(c, RateClass::Log),
            ]
        }
    })
}

fn case_label(input: &SelectionInput) -> &'static str {
    match (input.metric, input.r1 - input.r2) {
        (Metric::L2, 0) => "l2/equal-orders",
        (Metric::L2, _) => "l2/unequal-orders",
        (Metric::C, 0) => "c/equal-orders",
        (Metric::C, 1) => "c/adjacent-orders",
        (Metric::C, _) => "c/separated-orders",
    }
}

/// `(delta / L^e)^{-1/(mu - 1/p + 1/s)}` with `L = max(ln(1/delta), 1)`.
fn n_with_log(input: &SelectionInput, log_power: f64) -> f64 {
    let l = (1.0 / input.delta).ln().max(1.0);
    (input.delta / l.powf(log_power)).powf(-1.0 / rate_denominator(input))
}

/// Log power entering `n` for a given rate class and order configuration.
fn n_log_power(input: &SelectionInput, rate: RateClass) -> f64 {
    let s = input.class.s;
    match rate {
        RateClass::Clean => 0.0,
        RateClass::LogHalf => 0.5,
        RateClass::LogOneMinusInvS => 1.0 - 1.0 / s,
        RateClass::Log => 1.0,
        RateClass::LogThreeHalvesMinusInvS | RateClass::LogTwoMinusInvS => input.p.reciprocal() - 1.0 / s,
    }
}

/// With adjacent orders under C, `gamma = 1` keeps the plain `n` despite its
/// log-penalized rate.
fn adjacent_gamma_one(input: &SelectionInput, g: f64) -> bool {
    input.metric == Metric::C && input.r1 == input.r2 + 1 && (g - 1.0).abs() <= POINT_TOL
}

/// Default `(n, gamma)`: the midpoint of the leftmost clean interval, or
/// `gamma = 1` when the orders are equal.
pub fn select_parameters(input: &SelectionInput) -> Result<Selection> {
    let intervals = gamma_intervals(input)?;
    let chosen = intervals.iter().find(|i| i.rate == RateClass::Clean).unwrap_or(&intervals[0]);
    let gamma = match chosen.set {
        GammaSet::Point { gamma } => gamma,
        GammaSet::Interval { lo, hi, .. } => 0.5 * (lo + hi),
    };
    Ok(Selection {
        n: n_with_log(input, n_log_power(input, chosen.rate)),
        gamma,
        case_label: case_label(input).to_string(),
        rate: chosen.rate,
    })
}

/// `n` for a user-chosen `gamma`, which must lie in one of the listed sets.
/// Exceptional points use the log-modified `n` of their rate class.
pub fn select_parameters_with_gamma(input: &SelectionInput, gamma: f64) -> Result<Selection> {
    let intervals = gamma_intervals(input)?;
    let hit = intervals
        .iter()
        .filter(|i| i.set.contains(gamma))
        // a point beats the interval that merely touches it
        .min_by_key(|i| matches!(i.set, GammaSet::Interval { .. }))
        .ok_or_else(|| {
            Error::Parameter(format!("gamma = {gamma} is outside the range covered by the error analysis"))
        })?;
    let gamma = match hit.set {
        GammaSet::Point { gamma } => gamma,
        GammaSet::Interval { .. } => gamma,
    };
    let power = if adjacent_gamma_one(input, gamma) { 0.0 } else { n_log_power(input, hit.rate) };
    Ok(Selection { n: n_with_log(input, power), gamma, case_label: "forced".to_string(), rate: hit.rate })
}

/// Exponent `e` in the error bound `delta^e` of the clean case.
pub fn theoretical_error_exponent(input: &SelectionInput) -> Result<f64> {
    check_admissibility(input)?;
    let (_, y) = smoothness_split(input);
    let shift = match input.metric {
        Metric::L2 => 0.5,
        Metric::C => 1.5,
    };
    Ok((y - shift) / rate_denominator(input))
}
