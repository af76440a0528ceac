//! Witness pairs `(f1, f2)` that no method can tell apart from data within
//! `delta`, together with the constants of the resulting lower bounds.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{lp_norm, LpExponent};
use crate::spectral::{mixed_derivative_coeffs, parseval_l2_norm, synth_eval, ClassParams, CoeffGrid};

/// How the `N` band indices are picked from `[N + r1, 3N + r1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessSelection {
    /// The `N` smallest admissible indices.
    Smallest,
    /// The `N` smallest admissible even indices.
    Even,
    /// The `N` smallest admissible odd indices.
    Odd,
}

impl WitnessSelection {
    fn accepts(self, k: usize) -> bool {
        match self {
            Self::Smallest => true,
            Self::Even => k.is_multiple_of(2),
            Self::Odd => !k.is_multiple_of(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessConstants {
    pub c_tilde: f64,
    pub c_bar: f64,
    pub c_dbar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub f1: CoeffGrid,
    pub f2: CoeffGrid,
    pub n: usize,
    pub r1: usize,
    pub r2: usize,
    pub class: ClassParams,
    pub selected_k: Vec<usize>,
    pub constants: WitnessConstants,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `(1 + 4^{s mu})^{-1/s}`, evaluated in log space so large `s mu` stays finite.
pub fn c_tilde(class: ClassParams) -> f64 {
    let e = class.s * class.mu * 4f64.ln();
    let ln_sum = e + (-e).exp().ln_1p();
    (-ln_sum / class.s).exp()
}

pub fn witness_constants(r1: usize, r2: usize, class: ClassParams) -> WitnessConstants {
    let ct = c_tilde(class);
    let (r1f, r2f) = (r1 as f64, r2 as f64);
    let common = ct.ln() + (r2f + 0.5).sqrt().ln() - class.mu * r2f.ln() + ln_factorial(2 * r2) - ln_factorial(r2);
    let ln2 = 2f64.ln();
    let c_bar = (common - (r1f + r2f) * ln2 - ln_factorial(r1)).exp();
    let c_dbar = (common - (3.0 * r1f + r2f - 1.5) * ln2 - ln_factorial(r1 - 1)).exp();
    WitnessConstants { c_tilde: ct, c_bar, c_dbar }
}

/// Value of every band entry of `f1`: `c_tilde N^{-mu-1/s} r2^{-mu}`.
pub fn band_value(n: usize, r2: usize, class: ClassParams) -> f64 {
    c_tilde(class) * (n as f64).powf(-class.mu - 1.0 / class.s) * (r2 as f64).powf(-class.mu)
}

/// Builds the pair with the `N` smallest admissible band indices.
pub fn build_witness_pair(
    n: usize,
    r1: usize,
    r2: usize,
    class: ClassParams,
    excluded: &BTreeSet<(usize, usize)>,
) -> Result<WitnessPair> {
    build_witness_pair_with(n, r1, r2, class, excluded, WitnessSelection::Smallest)
}

pub fn build_witness_pair_with(
    n: usize,
    r1: usize,
    r2: usize,
    class: ClassParams,
    excluded: &BTreeSet<(usize, usize)>,
    selection: WitnessSelection,
) -> Result<WitnessPair> {
    if r1 == 0 || r2 == 0 {
        return Err(Error::Parameter("derivative orders r1, r2 must be positive".into()));
    }
    if n < r1 {
        // the band bound (3N + r1) / N <= 4 behind the class-norm estimate needs N >= r1
        return Err(Error::Parameter(format!("witness size N = {n} must be at least r1 = {r1}")));
    }
    let selected_k: Vec<usize> = (n + r1..=3 * n + r1)
        .filter(|&k| selection.accepts(k) && !excluded.contains(&(k, r2)))
        .take(n)
        .collect();
    if selected_k.len() < n {
        return Err(Error::Infeasible(format!(
            "only {} admissible indices in [{}, {}] for N = {n}",
            selected_k.len(),
            n + r1,
            3 * n + r1
        )));
    }
    let constants = witness_constants(r1, r2, class);
    let mut f2 = CoeffGrid::new();
    f2.insert(0, 0, constants.c_tilde)?;
    let mut f1 = f2.clone();
    let value = band_value(n, r2, class);
    for &k in &selected_k {
        f1.insert(k, r2, value)?;
    }
    Ok(WitnessPair { f1, f2, n, r1, r2, class, selected_k, constants })
}

/// `||f1 - f2||_p` over the coefficient sequences.
pub fn witness_lp_distance(w: &WitnessPair, p: LpExponent) -> f64 {
    lp_norm(&w.f1.sub(&w.f2), p)
}

/// `c_tilde r2^{-mu} N^{-mu-1/s+1/p}`.
pub fn witness_distance_closed_form(n: usize, r2: usize, class: ClassParams, p: LpExponent) -> f64 {
    c_tilde(class)
        * (r2 as f64).powf(-class.mu)
        * (n as f64).powf(-class.mu - 1.0 / class.s + p.reciprocal())
}

/// Smallest real `N` with witness distance at most `delta`:
/// `(r2^mu delta / c_tilde)^{-1/(mu + 1/s - 1/p)}`.
pub fn min_n_for_delta(delta: f64, p: LpExponent, class: ClassParams, r2: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta = {delta} must lie in (0, 1)")));
    }
    let exponent = class.mu + 1.0 / class.s - p.reciprocal();
    Ok(((r2 as f64).powf(class.mu) * delta / c_tilde(class)).powf(-1.0 / exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub measured: f64,
    pub bound: f64,
    pub ratio: f64,
    pub passed: bool,
}

impl LowerBoundReport {
    fn new(measured: f64, bound: f64) -> Self {
        Self { measured, bound, ratio: measured / bound, passed: measured >= bound }
    }
}

/// `|g^{(r1,r2)}(1, 1)|`.
pub fn corner_derivative(c: &CoeffGrid, r1: usize, r2: usize) -> f64 {
    let d = mixed_derivative_coeffs(c, r1, r2);
    synth_eval(&d, 1.0, 1.0).map(f64::abs).unwrap_or(f64::NAN)
}

/// `||g^{(r1,r2)}||_{L2}`.
pub fn derivative_l2_norm(c: &CoeffGrid, r1: usize, r2: usize) -> f64 {
    parseval_l2_norm(&mixed_derivative_coeffs(c, r1, r2))
}

/// Checks `|f1^{(r1,r2)}(1,1)| >= c_bar N^{-mu+2r1-1/s+3/2}`.
pub fn verify_lower_bound_c(w: &WitnessPair) -> LowerBoundReport {
    let ClassParams { s, mu } = w.class;
    let bound = w.constants.c_bar * (w.n as f64).powf(-mu + 2.0 * w.r1 as f64 - 1.0 / s + 1.5);
    LowerBoundReport::new(corner_derivative(&w.f1, w.r1, w.r2), bound)
}

/// Checks `||f1^{(r1,r2)}||_{L2} >= c_dbar N^{-mu+2r1-1/s+1/2}`.
pub fn verify_lower_bound_l2(w: &WitnessPair) -> LowerBoundReport {
    let ClassParams { s, mu } = w.class;
    let bound = w.constants.c_dbar * (w.n as f64).powf(-mu + 2.0 * w.r1 as f64 - 1.0 / s + 0.5);
    LowerBoundReport::new(derivative_l2_norm(&w.f1, w.r1, w.r2), bound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selection: WitnessSelection,
    pub selected_k: Vec<usize>,
    pub c: LowerBoundReport,
    pub l2: LowerBoundReport,
}

/// Lower-bound reports for the smallest, even-only and odd-only band
/// selections. Selections that do not fit in the band are skipped.
pub fn parity_variants(n: usize, r1: usize, r2: usize, class: ClassParams) -> Result<Vec<SelectionReport>> {
    let mut out = Vec::new();
    for selection in [WitnessSelection::Smallest, WitnessSelection::Even, WitnessSelection::Odd] {
        match build_witness_pair_with(n, r1, r2, class, &BTreeSet::new(), selection) {
            Ok(w) => out.push(SelectionReport {
                selection,
                selected_k: w.selected_k.clone(),
                c: verify_lower_bound_c(&w),
                l2: verify_lower_bound_l2(&w),
            }),
            Err(Error::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
