//! Bivariate functions represented by their Fourier-Legendre coefficients.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cross::HyperbolicCross;
use crate::error::{check_unit_interval, Error, Result};
use crate::legendre::{clenshaw_dense, muller_dense, phi_all_unchecked};

pub const COEFFGRID_HEADER: &str = "# coeffgrid v1";

/// Default resolution of the Chebyshev sampling grid used for sup norms.
pub const DEFAULT_SUP_RESOLUTION: usize = 257;

/// Sparse grid of coefficients `c_{k,j} = <f, phi_k phi_j>`.
///
/// Iteration is ordered by `(k, j)`. Exact zeros are never stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoeffGrid {
    entries: BTreeMap<(usize, usize), f64>,
}

impl CoeffGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), f64)>,
    {
        let mut grid = Self::new();
        for ((k, j), v) in entries {
            if grid.entries.contains_key(&(k, j)) {
                return Err(Error::Parameter(format!("duplicate index ({k}, {j})")));
            }
            grid.insert(k, j, v)?;
        }
        Ok(grid)
    }

    /// Sets `c_{k,j}`; a zero value removes the entry.
    pub fn insert(&mut self, k: usize, j: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Parameter(format!("non-finite coefficient at ({k}, {j})")));
        }
        if value == 0.0 {
            self.entries.remove(&(k, j));
        } else {
            self.entries.insert((k, j), value);
        }
        Ok(())
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.entries.get(&(k, j)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(k, j), &v)| (k, j, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest stored `k` and `j` (independently), or `None` when empty.
    pub fn extent(&self) -> Option<(usize, usize)> {
        if self.is_empty() {
            return None;
        }
        let max_k = self.entries.keys().map(|&(k, _)| k).max().unwrap_or(0);
        let max_j = self.entries.keys().map(|&(_, j)| j).max().unwrap_or(0);
        Some((max_k, max_j))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = Self::new();
        for (k, j, v) in self.iter() {
            // finite * finite may overflow; callers scale by modest factors
            out.entries.insert((k, j), v * factor);
        }
        out.entries.retain(|_, v| *v != 0.0);
        out
    }

    /// Entrywise `self - other`.
    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, -1.0)
    }

    /// Entrywise `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, 1.0)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        let mut out = self.clone();
        for (k, j, v) in other.iter() {
            let slot = out.entries.entry((k, j)).or_insert(0.0);
            *slot += sign * v;
        }
        out.entries.retain(|_, v| *v != 0.0);
        out
    }

    /// Drops entries with `|c| <= tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        Self {
            entries: self.entries.iter().filter(|(_, v)| v.abs() > tol).map(|(i, v)| (*i, *v)).collect(),
        }
    }

    /// Dense `(max_k + 1) x (max_j + 1)` copy, row index `k`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let Some((mk, mj)) = self.extent() else {
            return Vec::new();
        };
        let mut out = vec![vec![0.0; mj + 1]; mk + 1];
        for (k, j, v) in self.iter() {
            out[k][j] = v;
        }
        out
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let mut entries = BTreeMap::new();
        for (k, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    entries.insert((k, j), v);
                }
            }
        }
        Self { entries }
    }

    /// Text form: a `# coeffgrid v1` header, then `k<TAB>j<TAB>value` lines in
    /// `(k, j)` order. Values use the shortest decimal that round-trips.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(COEFFGRID_HEADER);
        out.push('\n');
        for (k, j, v) in self.iter() {
            let _ = writeln!(out, "{k}\t{j}\t{v:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == COEFFGRID_HEADER => {}
            _ => {
                return Err(Error::Parse { line: 1, message: format!("expected header {COEFFGRID_HEADER:?}") })
            }
        }
        let mut grid = Self::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let k: usize = fields[0].parse().map_err(|_| bad(format!("bad index {:?}", fields[0])))?;
            let j: usize = fields[1].parse().map_err(|_| bad(format!("bad index {:?}", fields[1])))?;
            let v: f64 = fields[2].parse().map_err(|_| bad(format!("bad value {:?}", fields[2])))?;
            if grid.entries.contains_key(&(k, j)) {
                return Err(bad(format!("duplicate index ({k}, {j})")));
            }
            grid.insert(k, j, v).map_err(|e| bad(e.to_string()))?;
        }
        Ok(grid)
    }
}

/// Smoothness-class parameters `(s, mu)` of the dominating-mixed-smoothness
/// norm `||f||_{s,mu}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub s: f64,
    pub mu: f64,
}

impl ClassParams {
    pub fn new(s: f64, mu: f64) -> Result<Self> {
        if !(s >= 1.0 && s.is_finite()) {
            return Err(Error::Parameter(format!("class exponent s = {s} must be finite and >= 1")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Parameter(format!("smoothness mu = {mu} must be finite and > 0")));
        }
        Ok(Self { s, mu })
    }
}

#[inline]
fn underline(k: usize) -> f64 {
    k.max(1) as f64
}

/// `(sum (max(1,k) max(1,j))^{s mu} |c_{k,j}|^s)^{1/s}`.
pub fn class_norm(c: &CoeffGrid, params: ClassParams) -> f64 {
    let ClassParams { s, mu } = params;
    let total: f64 = c
        .iter()
        .map(|(k, j, v)| (underline(k) * underline(j)).powf(s * mu) * v.abs().powf(s))
        .sum();
    total.powf(1.0 / s)
}

/// `sqrt(sum c^2)`, the L2 norm of the synthesized function.
pub fn parseval_l2_norm(c: &CoeffGrid) -> f64 {
    c.iter().map(|(_, _, v)| v * v).sum::<f64>().sqrt()
}

/// `sum c_{k,j} phi_k(t) phi_j(tau)`: one Clenshaw sum per row, then one
/// across rows.
pub fn synth_eval(c: &CoeffGrid, t: f64, tau: f64) -> Result<f64> {
    check_unit_interval(t)?;
    check_unit_interval(tau)?;
    let dense = c.to_dense();
    let row_sums: Vec<f64> = dense.iter().map(|row| clenshaw_dense(row, tau)).collect();
    Ok(clenshaw_dense(&row_sums, t))
}

/// Coefficients of `f^(r1, r2)`: the `k`-axis is differentiated `r1` times,
/// then the `j`-axis `r2` times.
pub fn mixed_derivative_coeffs(c: &CoeffGrid, r1: usize, r2: usize) -> CoeffGrid {
    let dense = c.to_dense();
    if dense.is_empty() {
        return CoeffGrid::new();
    }
    let width = dense[0].len();
    // along k for each fixed j
    let columns: Vec<Vec<f64>> = (0..width)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = dense.iter().map(|row| row[j]).collect();
            muller_dense(&col, r1)
        })
        .collect();
    let height = columns.first().map_or(0, Vec::len);
    if height == 0 {
        return CoeffGrid::new();
    }
    let rows: Vec<Vec<f64>> = (0..height)
        .into_par_iter()
        .map(|k| {
            let row: Vec<f64> = columns.iter().map(|col| col[k]).collect();
            muller_dense(&row, r2)
        })
        .collect();
    CoeffGrid::from_dense(&rows)
}

/// Same as [`mixed_derivative_coeffs`] but differentiating the `j`-axis first.
pub fn mixed_derivative_coeffs_tau_first(c: &CoeffGrid, r1: usize, r2: usize) -> CoeffGrid {
    let transposed = CoeffGrid { entries: c.entries.iter().map(|(&(k, j), &v)| ((j, k), v)).collect() };
    let d = mixed_derivative_coeffs(&transposed, r2, r1);
    CoeffGrid { entries: d.entries.into_iter().map(|((j, k), v)| ((k, j), v)).collect() }
}

/// Chebyshev-clustered sample points `cos(pi i / (n - 1))`, from `1` down to `-1`.
pub fn chebyshev_points(resolution: usize) -> Vec<f64> {
    let last = (resolution - 1) as f64;
    (0..resolution)
        .map(|i| match i {
            0 => 1.0,
            _ if i == resolution - 1 => -1.0,
            _ => (std::f64::consts::PI * i as f64 / last).cos(),
        })
        .collect()
}

/// Maximum of `|synth_eval(c, ., .)|` over a `resolution x resolution` tensor
/// grid of Chebyshev-clustered points. The corners `(+-1, +-1)` are always
/// sampled.
pub fn sup_norm_on_grid(c: &CoeffGrid, resolution: usize) -> Result<f64> {
    if resolution < 2 {
        return Err(Error::Parameter(format!("sup-norm resolution {resolution} must be >= 2")));
    }
    let Some((mk, mj)) = c.extent() else {
        return Ok(0.0);
    };
    let dense = c.to_dense();
    let pts = chebyshev_points(resolution);
    let phi_t: Vec<Vec<f64>> = pts.iter().map(|&x| phi_all_unchecked(mk, x)).collect();
    let phi_tau: Vec<Vec<f64>> = pts.iter().map(|&x| phi_all_unchecked(mj, x)).collect();
    let max = phi_t
        .par_iter()
        .map(|pt| {
            // g[j] = sum_k phi_k(t) c_{k,j}
            let mut g = vec![0.0; mj + 1];
            for (p, row) in pt.iter().zip(&dense) {
                for (slot, v) in g.iter_mut().zip(row) {
                    *slot += p * v;
                }
            }
            phi_tau
                .iter()
                .map(|pj| pj.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>().abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(max)
}

/// Keeps exactly the entries whose index lies in the cross.
pub fn restrict_to_cross(c: &CoeffGrid, cross: &HyperbolicCross) -> CoeffGrid {
    CoeffGrid {
        entries: c
            .entries
            .iter()
            .filter(|(&(k, j), _)| cross.contains(k, j))
            .map(|(i, v)| (*i, *v))
            .collect(),
    }
}
