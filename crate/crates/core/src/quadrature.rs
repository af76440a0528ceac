//! Gauss-Legendre rules and tensor-product projection onto the Legendre basis.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::legendre::{legendre_p, phi_all_unchecked};
use crate::spectral::CoeffGrid;

pub const MAX_ORDER: usize = 4096;
const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// An `m`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes in strictly increasing order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Applies the rule to `f` on `[-1, 1]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `(P_m(x), P_m'(x))`.
fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let p = legendre_p(m, x);
    let q = legendre_p(m - 1, x);
    // interior only: Newton iterates never reach +-1
    let dp = m as f64 * (q - x * p) / (1.0 - x * x);
    (p, dp)
}

/// Builds the `m`-point rule by Newton iteration on `P_m`.
///
/// Only the non-negative half of the nodes is computed; the rest is mirrored,
/// so the rule is exactly symmetric.
pub fn gauss_legendre_rule(m: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_ORDER).contains(&m) {
        return Err(Error::Parameter(format!(
            "quadrature order {m} outside 1..={MAX_ORDER}"
        )));
    }
    let mf = m as f64;
    let half = m / 2;
    let mut pos_nodes = Vec::with_capacity(half);
    let mut pos_weights = Vec::with_capacity(half);
    for i in 1..=half {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (mf + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Internal(format!(
                "Newton iteration for node {i} of the {m}-point rule did not converge"
            )));
        }
        let (_, dp) = legendre_with_derivative(m, x);
        pos_nodes.push(x);
        pos_weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }

    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    // pos_nodes is decreasing; negated it is increasing
    for (x, w) in pos_nodes.iter().zip(&pos_weights) {
        nodes.push(-x);
        weights.push(*w);
    }
    if m % 2 == 1 {
        let dp = m as f64 * legendre_p(m - 1, 0.0);
        nodes.push(0.0);
        weights.push(2.0 / (dp * dp));
    }
    for (x, w) in pos_nodes.iter().zip(&pos_weights).rev() {
        nodes.push(*x);
        weights.push(*w);
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Samples `f` on the tensor grid of `rule`, row-major in `t`.
///
/// `f` is called concurrently from several threads; it must be pure.
fn sample_tensor<F>(f: &F, rule: &QuadratureRule) -> Vec<Vec<f64>>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    rule.nodes()
        .par_iter()
        .map(|&t| rule.nodes().iter().map(|&tau| f(t, tau)).collect())
        .collect()
}

/// Fourier-Legendre coefficients `<f, phi_k phi_j>` for `0 <= k, j <= max_degree`
/// by an `m x m` tensor Gauss rule.
///
/// The callback is invoked concurrently and must be safe to call from several
/// threads at once. Requires `m >= max_degree + 2`. Exact zeros are omitted
/// from the returned grid; quadrature round-off is kept.
pub fn compute_coeff_grid<F>(f: F, max_degree: usize, m: usize) -> Result<CoeffGrid>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if m < max_degree + 2 {
        return Err(Error::Parameter(format!(
            "quadrature order {m} must be at least max degree + 2 = {}",
            max_degree + 2
        )));
    }
    let rule = gauss_legendre_rule(m)?;
    let samples = sample_tensor(&f, &rule);
    // weighted basis table: wphi[a][k] = w_a phi_k(x_a)
    let wphi: Vec<Vec<f64>> = rule
        .nodes()
        .iter()
        .zip(rule.weights())
        .map(|(&x, &w)| phi_all_unchecked(max_degree, x).into_iter().map(|p| p * w).collect())
        .collect();

    // inner[a][j] = sum_b F(a, b) w_b phi_j(x_b)
    let inner: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|row| {
            let mut acc = vec![0.0; max_degree + 1];
            for (fv, wp) in row.iter().zip(&wphi) {
                for (slot, p) in acc.iter_mut().zip(wp) {
                    *slot += fv * p;
                }
            }
            acc
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..=max_degree)
        .into_par_iter()
        .map(|k| {
            let mut acc = vec![0.0; max_degree + 1];
            for (wp, inner_row) in wphi.iter().zip(&inner) {
                let scale = wp[k];
                for (slot, v) in acc.iter_mut().zip(inner_row) {
                    *slot += scale * v;
                }
            }
            acc
        })
        .collect();

    let mut grid = CoeffGrid::new();
    for (k, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            grid.insert(k, j, v)?;
        }
    }
    Ok(grid)
}

/// `sqrt(integral of g^2 over [-1, 1]^2)` with an `m x m` tensor rule.
pub fn l2_norm_quadrature<F>(g: F, m: usize) -> Result<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if m < 2 {
        return Err(Error::Parameter(format!("quadrature order {m} must be at least 2")));
    }
    let rule = gauss_legendre_rule(m)?;
    let samples = sample_tensor(&g, &rule);
    let total: f64 = samples
        .iter()
        .zip(rule.weights())
        .map(|(row, wa)| wa * row.iter().zip(rule.weights()).map(|(v, wb)| wb * v * v).sum::<f64>())
        .sum();
    Ok(total.sqrt())
}
