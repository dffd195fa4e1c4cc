use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TOLERANCES;
use crate::error::{BdaError, Result};
use crate::numerics::RealVector;

/// Central differences of `map` at `x`, one coordinate at a time.
pub fn fd_gradient<F>(map: F, x: &RealVector, eps: f64) -> Result<RealVector>
where
    F: Fn(&RealVector) -> f64,
{
    if !(eps > 0.0) {
        return Err(BdaError::Contract(format!("finite-difference step {eps} must be positive")));
    }
    let mut out = RealVector::zeros(x.len());
    for i in 0..x.len() {
        let mut probe = x.clone();
        probe[i] = x[i] + eps;
        let up = map(&probe);
        probe[i] = x[i] - eps;
        let down = map(&probe);
        if !up.is_finite() || !down.is_finite() {
            return Err(BdaError::numerical("finite-difference probe", format!("coordinate {i}")));
        }
        out[i] = (up - down) / (2.0 * eps);
    }
    Ok(out)
}

const GRID_CHUNK: usize = 4096;

/// Minimizer of `map` over `points` equally spaced nodes of `[lo, hi]`.
/// Ties go to the smallest node. Chunks are scanned in parallel and reduced
/// in order, so the answer does not depend on the thread count.
pub fn grid_argmin<F>(map: F, lo: f64, hi: f64, points: usize) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64 + Sync,
{
    if points < 2 || !(lo < hi) {
        return Err(BdaError::Contract(format!(
            "grid needs lo < hi and at least 2 points, got [{lo}, {hi}] with {points}"
        )));
    }
    let node = |i: usize| {
        if i == points - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (points - 1) as f64
        }
    };
    let chunks = points.div_ceil(GRID_CHUNK);
    let best: Vec<(usize, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut best = (usize::MAX, f64::INFINITY);
            for i in c * GRID_CHUNK..((c + 1) * GRID_CHUNK).min(points) {
                let v = map(node(i));
                if v < best.1 {
                    best = (i, v);
                }
            }
            best
        })
        .collect();
    let (i, v) = best.into_iter().fold((usize::MAX, f64::INFINITY), |acc, b| if b.1 < acc.1 { b } else { acc });
    if i == usize::MAX {
        return Err(BdaError::numerical("grid_argmin", "no finite value on the grid"));
    }
    Ok((node(i), v))
}

/// Stationary point of the unrolled counter-example objective under plain
/// descent, `x̂·e`, where `t = x̂` solves `t³ + a(at − 1)³ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhgLimit {
    /// `a_K = 1 − (1 − s_l)^K`.
    pub a: f64,
    pub x_hat: f64,
    pub residual: f64,
}

fn reduced_condition(a: f64, t: f64) -> f64 {
    t.powi(3) + a * (a * t - 1.0).powi(3)
}

pub fn rhg_limit_oracle_counterexample(s_l: f64, steps: usize) -> Result<RhgLimit> {
    if !(s_l > 0.0 && s_l < 1.0) || steps == 0 {
        return Err(BdaError::Contract(format!("need s_l in (0, 1) and K ≥ 1, got {s_l}, {steps}")));
    }
    let a = 1.0 - (1.0 - s_l).powi(steps as i32);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (f_lo, f_hi) = (reduced_condition(a, lo), reduced_condition(a, hi));
    if f_lo == 0.0 {
        return Ok(RhgLimit { a, x_hat: 0.0, residual: 0.0 });
    }
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(BdaError::numerical("rhg limit bisection", format!("no sign change on [0, 1] for a = {a}")));
    }
    while hi - lo > 0.0 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reduced_condition(a, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (r_lo, r_hi) = (reduced_condition(a, lo).abs(), reduced_condition(a, hi).abs());
    let (x_hat, residual) = if r_lo <= r_hi { (lo, r_lo) } else { (hi, r_hi) };
    if residual > TOLERANCES.root_residual {
        return Err(BdaError::numerical("rhg limit bisection", format!("residual {residual:e}")));
    }
    Ok(RhgLimit { a, x_hat, residual })
}

/// `min_{a ∈ grid[0,1]} 1 + (a − 1)³ a` over `points` nodes.
pub fn reduced_bound_minimum(points: usize) -> f64 {
    (0..points)
        .map(|i| {
            let a = i as f64 / (points - 1) as f64;
            1.0 + (a - 1.0).powi(3) * a
        })
        .fold(f64::INFINITY, f64::min)
}
