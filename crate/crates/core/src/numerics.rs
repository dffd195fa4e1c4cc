//! Dense linear algebra carriers, box regions and the deterministic random stream.
//!
//! Vectors and matrices are `nalgebra` dense types. Finiteness is not encoded
//! in the type; it is checked with [`ensure_finite`] wherever values cross a
//! module boundary (problem evaluations, solver inputs, serialized records).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BdaError, Result};

pub type RealVector = DVector<f64>;
pub type RealMatrix = DMatrix<f64>;

/// Fails with a numerical error naming `what` if any entry is NaN or infinite.
pub fn ensure_finite(v: &RealVector, what: &str) -> Result<()> {
    match v.iter().position(|e| !e.is_finite()) {
        None => Ok(()),
        Some(i) => Err(BdaError::numerical(what, format!("entry {i}"))),
    }
}

pub fn ensure_finite_matrix(m: &RealMatrix, what: &str) -> Result<()> {
    match m.iter().position(|e| !e.is_finite()) {
        None => Ok(()),
        Some(i) => Err(BdaError::numerical(what, format!("entry ({}, {})", i % m.nrows(), i / m.nrows()))),
    }
}

pub fn ensure_finite_scalar(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(BdaError::numerical(what, "scalar"))
    }
}

/// One side of an interval. `Unbounded` keeps infinities out of arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Unbounded,
    At(f64),
}

impl Bound {
    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Unbounded => None,
            Bound::At(v) => Some(v),
        }
    }
}

/// Per-coordinate interval constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    lower: Vec<Bound>,
    upper: Vec<Bound>,
}

impl BoxRegion {
    pub fn new(lower: Vec<Bound>, upper: Vec<Bound>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(BdaError::Contract(format!(
                "box bounds need equal positive lengths, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if let (Bound::At(l), Bound::At(h)) = (lo, hi) {
                if !(l.is_finite() && h.is_finite()) || l > h {
                    return Err(BdaError::Contract(format!("invalid interval [{l}, {h}] at coordinate {i}")));
                }
            }
        }
        Ok(BoxRegion { lower, upper })
    }

    /// The whole space ℝ^dim.
    pub fn unbounded(dim: usize) -> Self {
        BoxRegion { lower: vec![Bound::Unbounded; dim], upper: vec![Bound::Unbounded; dim] }
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxRegion::new(vec![Bound::At(lo); dim], vec![Bound::At(hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self, i: usize) -> Bound {
        self.lower[i]
    }

    pub fn upper(&self, i: usize) -> Bound {
        self.upper[i]
    }

    pub fn is_whole_space(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|b| matches!(b, Bound::Unbounded))
    }

    pub fn is_compact(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|b| matches!(b, Bound::At(_)))
    }

    pub fn contains(&self, v: &RealVector) -> bool {
        v.len() == self.dim()
            && v.iter().enumerate().all(|(i, &x)| {
                self.lower[i].value().is_none_or(|l| x >= l) && self.upper[i].value().is_none_or(|h| x <= h)
            })
    }

    fn check_dim(&self, v: &RealVector) -> Result<()> {
        if v.len() != self.dim() {
            return Err(BdaError::Contract(format!(
                "vector of length {} projected onto a {}-dimensional box",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Projection together with the mask of coordinates that were clamped.
    pub fn project_with_mask(&self, v: &RealVector) -> Result<(RealVector, Vec<bool>)> {
        self.check_dim(v)?;
        let mut out = v.clone();
        let mut mask = vec![false; v.len()];
        for i in 0..v.len() {
            if let Some(l) = self.lower[i].value() {
                if out[i] < l {
                    out[i] = l;
                    mask[i] = true;
                }
            }
            if let Some(h) = self.upper[i].value() {
                if out[i] > h {
                    out[i] = h;
                    mask[i] = true;
                }
            }
        }
        Ok((out, mask))
    }

    /// Corner of the box selected by `signs` (false = lower, true = upper).
    /// `None` when a selected side is unbounded.
    pub fn corner(&self, signs: &[bool]) -> Option<RealVector> {
        let vals: Option<Vec<f64>> = signs
            .iter()
            .enumerate()
            .map(|(i, &up)| if up { self.upper[i].value() } else { self.lower[i].value() })
            .collect();
        vals.map(RealVector::from_vec)
    }
}

/// Euclidean projection onto `region`: coordinate-wise clamping.
pub fn project_box(v: &RealVector, region: &BoxRegion) -> Result<RealVector> {
    Ok(region.project_with_mask(v)?.0)
}

/// Deterministic, platform-independent stream of pseudo-random reals.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn index(&mut self, upper: usize) -> usize {
        self.rng.random_range(0..upper)
    }

    pub fn bool(&mut self) -> bool {
        self.rng.random::<bool>()
    }

    pub fn normal_vector(&mut self, dim: usize) -> RealVector {
        RealVector::from_fn(dim, |_, _| self.normal())
    }

    pub fn uniform_vector(&mut self, dim: usize, lo: f64, hi: f64) -> RealVector {
        RealVector::from_fn(dim, |_, _| self.uniform_in(lo, hi))
    }
}

impl Iterator for RngStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.uniform())
    }
}

pub fn rng_stream(seed: u64) -> RngStream {
    RngStream { rng: ChaCha8Rng::seed_from_u64(seed) }
}
