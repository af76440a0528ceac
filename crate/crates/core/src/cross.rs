//! Hyperbolic-cross index sets `{(k, j) : k >= r1, j >= r2, k j^gamma <= n}`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied before flooring a range endpoint.
const FLOOR_GUARD: f64 = 1e-12;

/// Refuse to materialize more indices than this.
pub const MAX_CROSS_CARDINALITY: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicCross {
    n: f64,
    gamma: f64,
    r1: usize,
    r2: usize,
    indices: Vec<(usize, usize)>,
}

#[inline]
fn guarded_floor(x: f64) -> usize {
    let v = (x * (1.0 + FLOOR_GUARD)).floor();
    if v <= 0.0 {
        0
    } else if v >= usize::MAX as f64 {
        usize::MAX
    } else {
        v as usize
    }
}

fn k_limit(n: f64, gamma: f64, r2: usize) -> usize {
    guarded_floor(n / (r2 as f64).powf(gamma))
}

fn j_limit(n: f64, gamma: f64, k: usize) -> usize {
    guarded_floor((n / k as f64).powf(1.0 / gamma))
}

fn check_params(n: f64, gamma: f64, r1: usize, r2: usize) -> Result<()> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::Parameter(format!("gamma = {gamma} must be finite and >= 1")));
    }
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Parameter(format!("cross size n = {n} must be finite and > 0")));
    }
    if r1 == 0 || r2 == 0 {
        return Err(Error::Parameter("derivative orders r1, r2 must be positive".into()));
    }
    Ok(())
}

/// Enumerates the cross in `(k, j)` order.
pub fn build_cross(n: f64, gamma: f64, r1: usize, r2: usize) -> Result<HyperbolicCross> {
    check_params(n, gamma, r1, r2)?;
    let kmax = k_limit(n, gamma, r2);
    if kmax > MAX_CROSS_CARDINALITY {
        return Err(Error::Parameter(format!("cross with n = {n} is too large to materialize")));
    }
    let mut total = 0usize;
    for k in r1..=kmax {
        total += (j_limit(n, gamma, k) + 1).saturating_sub(r2);
        if total > MAX_CROSS_CARDINALITY {
            return Err(Error::Parameter(format!(
                "cross with n = {n}, gamma = {gamma} exceeds {MAX_CROSS_CARDINALITY} indices"
            )));
        }
    }
    let mut indices = Vec::with_capacity(total);
    for k in r1..=kmax {
        for j in r2..=j_limit(n, gamma, k) {
            indices.push((k, j));
        }
    }
    Ok(HyperbolicCross { n, gamma, r1, r2, indices })
}

impl HyperbolicCross {
    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.r1, self.r2)
    }

    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn cardinality(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Membership test using the same floors as the enumeration.
    pub fn contains(&self, k: usize, j: usize) -> bool {
        k >= self.r1
            && j >= self.r2
            && k <= k_limit(self.n, self.gamma, self.r2)
            && j <= j_limit(self.n, self.gamma, k)
    }

    /// Largest `k` and largest `j` present, or `None` for an empty cross.
    pub fn max_extents(&self) -> Option<(usize, usize)> {
        let max_k = self.indices.last()?.0;
        let max_j = self.indices.iter().map(|&(_, j)| j).max()?;
        Some((max_k, max_j))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# cross v1 n={:?} gamma={:?} r1={} r2={}\n", self.n, self.gamma, self.r1, self.r2);
        for &(k, j) in &self.indices {
            let _ = writeln!(out, "{k}\t{j}");
        }
        out
    }

    /// Parses a dump and checks that the listed indices are exactly the cross
    /// described by the header.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, h)) => h.trim_end(),
            None => return Err(Error::Parse { line: 1, message: "empty input".into() }),
        };
        let bad_header = |m: &str| Error::Parse { line: 1, message: m.to_string() };
        let rest = header.strip_prefix("# cross v1").ok_or_else(|| bad_header("expected '# cross v1' header"))?;
        let (mut n, mut gamma, mut r1, mut r2) = (None, None, None, None);
        for field in rest.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| bad_header("malformed header field"))?;
            match key {
                "n" => n = value.parse::<f64>().ok(),
                "gamma" => gamma = value.parse::<f64>().ok(),
                "r1" => r1 = value.parse::<usize>().ok(),
                "r2" => r2 = value.parse::<usize>().ok(),
                _ => return Err(bad_header("unknown header field")),
            }
        }
        let (Some(n), Some(gamma), Some(r1), Some(r2)) = (n, gamma, r1, r2) else {
            return Err(bad_header("header must define n, gamma, r1 and r2"));
        };
        let cross = build_cross(n, gamma, r1, r2).map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        let mut listed = Vec::new();
        for (idx, line) in lines {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: String| Error::Parse { line: idx + 1, message: m };
            let (a, b) = line.split_once('\t').ok_or_else(|| bad("expected k<TAB>j".into()))?;
            let k = a.parse::<usize>().map_err(|_| bad(format!("bad index {a:?}")))?;
            let j = b.parse::<usize>().map_err(|_| bad(format!("bad index {b:?}")))?;
            listed.push((k, j));
        }
        if listed != cross.indices {
            return Err(Error::Parse { line: 1, message: "index list does not match the header".into() });
        }
        Ok(cross)
    }
}
