//! Orthonormal Legendre polynomials on `[-1, 1]`.
//!
//! `phi_k(t) = sqrt(k + 1/2) * P_k(t)`, where `P_k` is the classical Legendre
//! polynomial normalized by `P_k(1) = 1`. The family is orthonormal with
//! respect to the plain `L2(-1, 1)` inner product.
//!
//! Two independent routes to derivatives live here: pointwise evaluation by
//! the differentiated three-term recurrence ([`eval_phi_derivative`]) and
//! exact coefficient-space differentiation ([`muller_differentiate`]), which
//! rewrites `phi_k'` as a combination of lower-degree `phi_l` of opposite
//! parity.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};

const CACHED_INDICES: usize = 8192;

fn half_sqrt_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..CACHED_INDICES).map(|k| (k as f64 + 0.5).sqrt()).collect())
}

/// `sqrt(k + 1/2)`, cached for the first few thousand indices.
#[inline]
pub fn half_sqrt(k: usize) -> f64 {
    match half_sqrt_table().get(k) {
        Some(v) => *v,
        None => (k as f64 + 0.5).sqrt(),
    }
}

/// A sparse one-dimensional coefficient sequence `{(k, a_k)}`.
///
/// Indices are strictly increasing and every value is finite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Coeffs1D {
    entries: Vec<(usize, f64)>,
}

impl Coeffs1D {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a sequence from arbitrary-order entries. Duplicate indices and
    /// non-finite values are rejected.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(k, _)| k);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Parameter(format!("duplicate index {}", w[0].0)));
            }
        }
        if let Some(&(k, v)) = entries.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite value {v} at index {k}")));
        }
        Ok(Self { entries })
    }

    pub fn single(k: usize, value: f64) -> Self {
        Self::new(vec![(k, value)]).expect("single finite entry")
    }

    /// Sparse view of a dense slice; exact zeros are dropped.
    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (k, *v))
            .collect();
        Self { entries }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.max_index().map_or(0, |m| m + 1)];
        for &(k, v) in &self.entries {
            out[k] = v;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.entries
            .binary_search_by_key(&k, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|&(k, _)| k)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_dense(&self.to_dense().iter().map(|v| v * factor).collect::<Vec<_>>())
    }
}

/// Classical Legendre `P_k(t)` by the three-term recurrence. No domain check.
pub(crate) fn legendre_p(k: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    if k == 0 {
        return prev;
    }
    for m in 1..k {
        let m = m as f64;
        let next = ((2.0 * m + 1.0) * t * cur - m * prev) / (m + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `phi_k(t)`.
pub fn eval_phi(k: usize, t: f64) -> Result<f64> {
    check_unit_interval(t)?;
    Ok(half_sqrt(k) * legendre_p(k, t))
}

/// All of `phi_0(t), ..., phi_max(t)` in one recurrence sweep.
pub fn eval_phi_all(max_k: usize, t: f64) -> Result<Vec<f64>> {
    check_unit_interval(t)?;
    Ok(phi_all_unchecked(max_k, t))
}

pub(crate) fn phi_all_unchecked(max_k: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(max_k + 1);
    p.push(1.0);
    if max_k >= 1 {
        p.push(t);
    }
    for m in 1..max_k {
        let mf = m as f64;
        p.push(((2.0 * mf + 1.0) * t * p[m] - mf * p[m - 1]) / (mf + 1.0));
    }
    p.iter_mut().enumerate().for_each(|(k, v)| *v *= half_sqrt(k));
    p
}

/// The `r`-th derivative `phi_k^(r)(t)`; `r = 0` gives the value itself.
///
/// Differentiating `(m+1) P_{m+1} = (2m+1) t P_m - m P_{m-1}` `q` times gives
///
/// ```text
/// (m+1) P_{m+1}^(q) = (2m+1) (t P_m^(q) + q P_m^(q-1)) - m P_{m-1}^(q)
/// ```
///
/// which is advanced jointly for `q = 0..=r`. The recurrence has no
/// singularity at `t = +-1`, so endpoints need no special casing.
pub fn eval_phi_derivative(k: usize, r: usize, t: f64) -> Result<f64> {
    check_unit_interval(t)?;
    if k < r {
        return Ok(0.0);
    }
    // prev[q] = P_{m-1}^(q), cur[q] = P_m^(q)
    let mut prev = vec![0.0; r + 1];
    let mut cur = vec![0.0; r + 1];
    prev[0] = 1.0;
    if k == 0 {
        return Ok(half_sqrt(0) * prev[r]);
    }
    cur[0] = t;
    if r >= 1 {
        cur[1] = 1.0;
    }
    let mut next = vec![0.0; r + 1];
    for m in 1..k {
        let mf = m as f64;
        for q in 0..=r {
            let lower = if q > 0 { q as f64 * cur[q - 1] } else { 0.0 };
            next[q] = ((2.0 * mf + 1.0) * (t * cur[q] + lower) - mf * prev[q]) / (mf + 1.0);
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(half_sqrt(k) * cur[r])
}

/// Exact derivative of `sum_k a_k phi_k` in the same basis:
///
/// ```text
/// b_l = 2 sqrt(l + 1/2) * sum_{k > l, k + l odd} sqrt(k + 1/2) a_k
/// ```
///
/// Runs in linear time with one running suffix sum per parity class.
pub fn muller_differentiate(a: &Coeffs1D) -> Coeffs1D {
    let Some(top) = a.max_index() else {
        return Coeffs1D::empty();
    };
    let dense = a.to_dense();
    let mut out = vec![0.0; top];
    // suffix[parity] = sum over k > l with k % 2 == parity
    let mut suffix = [0.0f64; 2];
    for l in (0..top).rev() {
        let k = l + 1;
        suffix[k % 2] += half_sqrt(k) * dense[k];
        out[l] = 2.0 * half_sqrt(l) * suffix[(l + 1) % 2];
    }
    Coeffs1D::from_dense(&out)
}

/// `r`-fold application of [`muller_differentiate`].
pub fn muller_differentiate_iterated(a: &Coeffs1D, r: usize) -> Coeffs1D {
    let mut cur = a.clone();
    for _ in 0..r {
        if cur.is_empty() {
            break;
        }
        cur = muller_differentiate(&cur);
    }
    cur
}

/// Same as [`muller_differentiate_iterated`] on a dense slice, returning a
/// dense vector. Used by the grid code to avoid sparse round-trips.
pub(crate) fn muller_dense(values: &[f64], r: usize) -> Vec<f64> {
    let mut cur = values.to_vec();
    for _ in 0..r {
        if cur.len() <= 1 {
            return Vec::new();
        }
        let top = cur.len() - 1;
        let mut out = vec![0.0; top];
        let mut suffix = [0.0f64; 2];
        for l in (0..top).rev() {
            let k = l + 1;
            suffix[k % 2] += half_sqrt(k) * cur[k];
            out[l] = 2.0 * half_sqrt(l) * suffix[(l + 1) % 2];
        }
        cur = out;
    }
    cur
}

/// `sum_k a_k phi_k(t)` by Clenshaw's backward recurrence.
pub fn clenshaw_eval(a: &Coeffs1D, t: f64) -> Result<f64> {
    check_unit_interval(t)?;
    Ok(clenshaw_dense(&a.to_dense(), t))
}

// phi_{k+1} = alpha_k t phi_k - beta_k phi_{k-1}
#[inline]
fn rec_alpha(k: usize) -> f64 {
    let kf = k as f64;
    ((2.0 * kf + 1.0) * (2.0 * kf + 3.0)).sqrt() / (kf + 1.0)
}

#[inline]
fn rec_beta(k: usize) -> f64 {
    let kf = k as f64;
    kf / (kf + 1.0) * ((2.0 * kf + 3.0) / (2.0 * kf - 1.0)).sqrt()
}

pub(crate) fn clenshaw_dense(a: &[f64], t: f64) -> f64 {
    let phi0 = std::f64::consts::FRAC_1_SQRT_2;
    match a.len() {
        0 => return 0.0,
        1 => return a[0] * phi0,
        _ => {}
    }
    let n = a.len() - 1;
    let (mut b1, mut b2) = (0.0, 0.0); // b_{k+1}, b_{k+2}
    for k in (1..=n).rev() {
        let bk = a[k] + rec_alpha(k) * t * b1 - rec_beta(k + 1) * b2;
        b2 = b1;
        b1 = bk;
    }
    // b1 = b_1, b2 = b_2
    let phi1 = half_sqrt(1) * t;
    (a[0] - rec_beta(1) * b2) * phi0 + b1 * phi1
}
