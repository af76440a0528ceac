//! Bounded perturbations of coefficient grids.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowerbound::{build_witness_pair, min_n_for_delta};
use crate::spectral::{ClassParams, CoeffGrid};

/// Identifier of the random stream, recorded in run metadata.
pub const RNG_ALGORITHM: &str = "chacha20-boxmuller";

/// Exponent `p` of an `l_p` norm, `1 <= p <= inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum LpExponent {
    Finite(f64),
    Infinity,
}

impl LpExponent {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Self::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Self::Finite(p))
        } else {
            Err(Error::Parameter(format!("norm exponent p = {p} must be >= 1")))
        }
    }

    /// `p` as a float, `inf` for the max norm.
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(p) => p,
            Self::Infinity => f64::INFINITY,
        }
    }

    /// `1/p`, zero for the max norm.
    pub fn reciprocal(self) -> f64 {
        match self {
            Self::Finite(p) => 1.0 / p,
            Self::Infinity => 0.0,
        }
    }
}

impl fmt::Display for LpExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(p) => write!(f, "{p:?}"),
            Self::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for LpExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Ok(Self::Infinity),
            other => {
                let p: f64 = other.parse().map_err(|_| Error::Parameter(format!("bad norm exponent {s:?}")))?;
                Self::new(p)
            }
        }
    }
}

impl From<LpExponent> for String {
    fn from(p: LpExponent) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for LpExponent {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Parameters of the witness perturbation `xi = f1 - f2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessNoise {
    pub r1: usize,
    pub r2: usize,
    pub class: ClassParams,
    /// Band size; defaults to the smallest admissible one for `delta`.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Gaussian direction on the support, rescaled to norm `delta`.
    RandomSphere,
    /// `+-delta` on one index. Without an explicit index, the index and the
    /// sign are drawn from the seed.
    SingleCoefficient { index: Option<(usize, usize)> },
    AdversarialWitness(WitnessNoise),
}

impl NoiseMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RandomSphere => "random-sphere",
            Self::SingleCoefficient { .. } => "single-coefficient",
            Self::AdversarialWitness(_) => "adversarial-witness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p: LpExponent,
    pub delta: f64,
    pub mode: NoiseMode,
    pub seed: u64,
    /// Perturb only indices with `k, j <= support`.
    pub support: usize,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter(format!("noise level delta = {} must lie in (0, 1)", self.delta)));
        }
        if let LpExponent::Finite(p) = self.p {
            LpExponent::new(p)?;
        }
        Ok(())
    }
}

/// `(sum |x|^p)^(1/p)`, or `max |x|` for `p = inf`.
pub fn lp_norm(x: &CoeffGrid, p: LpExponent) -> f64 {
    lp_norm_values(x.iter().map(|(_, _, v)| v), p)
}

fn lp_norm_values(values: impl Iterator<Item = f64>, p: LpExponent) -> f64 {
    match p {
        LpExponent::Infinity => values.map(f64::abs).fold(0.0, f64::max),
        LpExponent::Finite(1.0) => values.map(f64::abs).sum(),
        LpExponent::Finite(2.0) => values.map(|v| v * v).sum::<f64>().sqrt(),
        LpExponent::Finite(p) => {
            // scaled by the largest entry, so a lone entry comes back exactly
            let values: Vec<f64> = values.map(f64::abs).collect();
            let top = values.iter().copied().fold(0.0, f64::max);
            if top == 0.0 {
                return 0.0;
            }
            top * values.iter().map(|v| (v / top).powf(p)).sum::<f64>().powf(1.0 / p)
        }
    }
}

/// Uniform on `(0, 1]` from the top 53 bits of one draw.
fn unit_open_closed(rng: &mut ChaCha20Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normals by the Box-Muller transform, both outputs used.
fn standard_normals(rng: &mut ChaCha20Rng, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let u1 = unit_open_closed(rng);
        let u2 = unit_open_closed(rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        out.push(radius * angle.cos());
        out.push(radius * angle.sin());
    }
    out.truncate(count);
    out
}

fn random_sphere(spec: &NoiseSpec) -> CoeffGrid {
    let side = spec.support + 1;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut values = standard_normals(&mut rng, side * side);
    // two passes: the second removes the rounding left by the first
    for _ in 0..2 {
        let norm = lp_norm_values(values.iter().copied(), spec.p);
        let scale = spec.delta / norm;
        values.iter_mut().for_each(|v| *v *= scale);
    }
    let mut xi = CoeffGrid::new();
    for (i, v) in values.into_iter().enumerate() {
        // values are finite normals scaled by a finite factor
        let _ = xi.insert(i / side, i % side, v);
    }
    xi
}

fn single_coefficient(spec: &NoiseSpec, index: Option<(usize, usize)>) -> Result<CoeffGrid> {
    let (k, j, sign) = match index {
        Some((k, j)) => {
            if k > spec.support || j > spec.support {
                return Err(Error::Parameter(format!(
                    "noise index ({k}, {j}) lies outside the support bound {}",
                    spec.support
                )));
            }
            (k, j, 1.0)
        }
        None => {
            let side = (spec.support + 1) as u64;
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            let cell = rng.next_u64() % (side * side);
            let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
            ((cell / side) as usize, (cell % side) as usize, sign)
        }
    };
    let mut xi = CoeffGrid::new();
    xi.insert(k, j, sign * spec.delta)?;
    Ok(xi)
}

fn witness_noise(spec: &NoiseSpec, w: &WitnessNoise) -> Result<CoeffGrid> {
    let n = match w.n {
        Some(n) => n,
        None => {
            let threshold = min_n_for_delta(spec.delta, spec.p, w.class, w.r2)?;
            (threshold.ceil() as usize).max(w.r1)
        }
    };
    let pair = build_witness_pair(n, w.r1, w.r2, w.class, &Default::default())?;
    let xi = pair.f1.sub(&pair.f2);
    let norm = lp_norm(&xi, spec.p);
    if norm > spec.delta * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "witness distance {norm:e} at N = {n} exceeds delta = {:e}",
            spec.delta
        )));
    }
    if let Some((mk, mj)) = xi.extent() {
        if mk > spec.support || mj > spec.support {
            return Err(Error::Parameter(format!(
                "witness band reaches k = {mk}, beyond the noise support {}",
                spec.support
            )));
        }
    }
    Ok(xi)
}

/// Returns `(c - xi, xi)` with `||xi||_p <= delta`.
pub fn perturb(c: &CoeffGrid, spec: &NoiseSpec) -> Result<(CoeffGrid, CoeffGrid)> {
    spec.validate()?;
    let xi = match &spec.mode {
        NoiseMode::RandomSphere => random_sphere(spec),
        NoiseMode::SingleCoefficient { index } => single_coefficient(spec, *index)?,
        NoiseMode::AdversarialWitness(w) => witness_noise(spec, w)?,
    };
    Ok((c.sub(&xi), xi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(p: LpExponent, delta: f64, mode: NoiseMode, seed: u64, support: usize) -> NoiseSpec {
        NoiseSpec { p, delta, mode, seed, support }
    }

    fn sample_grid() -> CoeffGrid {
        CoeffGrid::from_entries((0..10).flat_map(|k| (0..10).map(move |j| ((k, j), 1.0 / (1 + k * j) as f64))))
            .unwrap()
    }

    const EXPONENTS: [LpExponent; 4] =
        [LpExponent::Finite(1.0), LpExponent::Finite(2.0), LpExponent::Finite(3.5), LpExponent::Infinity];

    #[test]
    fn lp_norm_examples() {
        let x = CoeffGrid::from_entries([((0, 0), -3.0), ((1, 1), 4.0)]).unwrap();
        assert_eq!(lp_norm(&x, LpExponent::Finite(1.0)), 7.0);
        assert_eq!(lp_norm(&x, LpExponent::Infinity), 4.0);
        assert_eq!(lp_norm(&x, LpExponent::Finite(2.0)), 5.0);
        assert!((lp_norm(&x, LpExponent::Finite(3.0)) - 91f64.cbrt()).abs() < 1e-14);
        assert_eq!(lp_norm(&CoeffGrid::new(), LpExponent::Finite(2.0)), 0.0);
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!("inf".parse::<LpExponent>().unwrap(), LpExponent::Infinity);
        assert_eq!("2".parse::<LpExponent>().unwrap(), LpExponent::Finite(2.0));
        assert!("0.5".parse::<LpExponent>().is_err());
        assert!("x".parse::<LpExponent>().is_err());
        assert_eq!(LpExponent::Infinity.reciprocal(), 0.0);
        assert_eq!(String::from(LpExponent::Infinity), "inf");
        assert_eq!(String::from(LpExponent::Finite(2.0)), "2.0");
    }

    #[test]
    fn single_coefficient_example() {
        for p in EXPONENTS {
            let s = spec(p, 0.01, NoiseMode::SingleCoefficient { index: Some((1, 1)) }, 0, 5);
            let (_, xi) = perturb(&CoeffGrid::new(), &s).unwrap();
            assert_eq!(xi, CoeffGrid::from_entries([((1, 1), 0.01)]).unwrap());
            assert_eq!(lp_norm(&xi, p), 0.01);
        }
        let s = spec(LpExponent::Finite(2.0), 0.01, NoiseMode::SingleCoefficient { index: Some((9, 1)) }, 0, 5);
        assert!(perturb(&CoeffGrid::new(), &s).is_err());
    }

    #[test]
    fn seeded_single_coefficient() {
        let mode = NoiseMode::SingleCoefficient { index: None };
        let a = perturb(&CoeffGrid::new(), &spec(LpExponent::Infinity, 0.2, mode, 42, 7)).unwrap().1;
        let b = perturb(&CoeffGrid::new(), &spec(LpExponent::Infinity, 0.2, mode, 42, 7)).unwrap().1;
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
        let (k, j, v) = a.iter().next().unwrap();
        assert!(k <= 7 && j <= 7 && v.abs() == 0.2);
        let signs: std::collections::BTreeSet<bool> = (0..40)
            .map(|seed| {
                let x = perturb(&CoeffGrid::new(), &spec(LpExponent::Infinity, 0.2, mode, seed, 7)).unwrap().1;
                let positive = x.iter().next().unwrap().2 > 0.0;
                positive
            })
            .collect();
        assert_eq!(signs.len(), 2);
    }

    #[test]
    fn random_sphere_has_norm_delta() {
        let s = spec(LpExponent::Finite(2.0), 1e-3, NoiseMode::RandomSphere, 1, 20);
        let (_, xi) = perturb(&sample_grid(), &s).unwrap();
        assert_eq!(xi.len(), 21 * 21);
        assert!((lp_norm(&xi, s.p) / 1e-3 - 1.0).abs() < 1e-15);
        for p in EXPONENTS {
            for seed in 0..5 {
                let s = spec(p, 0.37, NoiseMode::RandomSphere, seed, 11);
                let (_, xi) = perturb(&sample_grid(), &s).unwrap();
                let norm = lp_norm(&xi, p);
                assert!((0.37 * (1.0 - 1e-12)..=0.37 * (1.0 + 1e-12)).contains(&norm), "p={p} norm={norm}");
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let s = spec(LpExponent::Finite(2.0), 1e-2, NoiseMode::RandomSphere, 99, 6);
        assert_eq!(perturb(&sample_grid(), &s).unwrap(), perturb(&sample_grid(), &s).unwrap());
        let other = NoiseSpec { seed: 100, ..s };
        assert_ne!(perturb(&sample_grid(), &s).unwrap().1, perturb(&sample_grid(), &other).unwrap().1);
    }

    #[test]
    fn random_sphere_is_homogeneous_in_delta() {
        for p in EXPONENTS {
            let base = spec(p, 1e-3, NoiseMode::RandomSphere, 8, 9);
            let (_, a) = perturb(&CoeffGrid::new(), &base).unwrap();
            let (_, b) = perturb(&CoeffGrid::new(), &NoiseSpec { delta: 0.25, ..base }).unwrap();
            for (k, j, v) in a.iter() {
                assert!((b.get(k, j) - 250.0 * v).abs() <= 4.0 * f64::EPSILON * (250.0 * v).abs());
            }
        }
    }

    #[test]
    fn data_is_truth_minus_noise() {
        let c = sample_grid();
        let s = spec(LpExponent::Finite(2.0), 1e-4, NoiseMode::RandomSphere, 3, 12);
        let (cd, xi) = perturb(&c, &s).unwrap();
        for k in 0..=12 {
            for j in 0..=12 {
                // c_delta is the correctly rounded c - xi
                assert_eq!(cd.get(k, j), c.get(k, j) - xi.get(k, j));
                let back = cd.get(k, j) + xi.get(k, j);
                let ulp = f64::EPSILON * c.get(k, j).abs();
                assert!((back - c.get(k, j)).abs() <= ulp);
            }
        }
    }

    #[test]
    fn witness_mode() {
        let class = ClassParams::new(2.0, 3.0).unwrap();
        let mode = NoiseMode::AdversarialWitness(WitnessNoise { r1: 1, r2: 1, class, n: None });
        let s = spec(LpExponent::Finite(2.0), 1e-4, mode, 0, 200);
        let (_, xi) = perturb(&CoeffGrid::new(), &s).unwrap();
        assert!(lp_norm(&xi, s.p) <= 1e-4 * (1.0 + 1e-12));
        assert!(xi.iter().all(|(_, j, _)| j == 1));

        // N = 4 gives distance ~2.44e-4 > 1e-4
        let mode = NoiseMode::AdversarialWitness(WitnessNoise { r1: 1, r2: 1, class, n: Some(4) });
        let s = spec(LpExponent::Finite(2.0), 1e-4, mode, 0, 200);
        assert!(matches!(perturb(&CoeffGrid::new(), &s), Err(Error::Infeasible(_))));

        let mode = NoiseMode::AdversarialWitness(WitnessNoise { r1: 1, r2: 1, class, n: None });
        let s = spec(LpExponent::Finite(2.0), 1e-4, mode, 0, 5);
        assert!(matches!(perturb(&CoeffGrid::new(), &s), Err(Error::Parameter(_))));
    }

    #[test]
    fn rejects_bad_delta() {
        for delta in [0.0, 1.0, -1e-3, f64::NAN] {
            let s = spec(LpExponent::Finite(2.0), delta, NoiseMode::RandomSphere, 0, 3);
            assert!(matches!(perturb(&CoeffGrid::new(), &s), Err(Error::Parameter(_))));
        }
    }
}
