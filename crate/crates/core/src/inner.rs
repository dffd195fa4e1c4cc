//! Lower-level dynamics: the aggregated step, the plain gradient step, step
//! schedules and the K-step runner.

use serde::{Deserialize, Serialize};

use crate::error::{BdaError, Result};
use crate::numerics::{ensure_finite, project_box, BoxRegion, RealVector};
use crate::problems::{require_dim, BilevelProblem};

/// Sequence `α_k` weighting the upper-level direction. `k` is the 0-based
/// index of the inner step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AlphaRule {
    /// `1/(k+1)`.
    Harmonic,
    /// `c/j` with `j = k+1` counting steps from 1.
    Scaled {
        c: f64,
    },
    Constant {
        a: f64,
    },
    /// `α_k = 0`; diagnostic only.
    Zero,
}

impl AlphaRule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            AlphaRule::Harmonic => 1.0 / (k as f64 + 1.0),
            AlphaRule::Scaled { c } => c / (k as f64 + 1.0),
            AlphaRule::Constant { a } => a,
            AlphaRule::Zero => 0.0,
        }
    }

    /// Whether `Σ α_k = ∞` and `α_k → 0`, decided per rule.
    pub fn diverges_and_vanishes(&self) -> bool {
        matches!(self, AlphaRule::Harmonic | AlphaRule::Scaled { .. })
    }
}

/// Sequence `β_k` weighting the lower-level direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BetaRule {
    Constant {
        b: f64,
    },
    /// `β_k = lower + (start − lower)/(k+1)`.
    Declining {
        start: f64,
        lower: f64,
    },
}

impl BetaRule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            BetaRule::Constant { b } => b,
            BetaRule::Declining { start, lower } => lower + (start - lower) / (k as f64 + 1.0),
        }
    }

    /// `β̲`, the infimum of the sequence.
    pub fn lower(&self) -> f64 {
        match *self {
            BetaRule::Constant { b } => b,
            BetaRule::Declining { lower, .. } => lower,
        }
    }

    /// A constant `c_β` with `|β_k − β_{k−1}| ≤ c_β/(k+1)²` for all `k ≥ 1`.
    pub fn c_beta(&self) -> f64 {
        match *self {
            BetaRule::Constant { .. } => 0.0,
            // (s−l)(1/k − 1/(k+1)) = (s−l)/(k(k+1)) ≤ 2(s−l)/(k+1)²
            BetaRule::Declining { start, lower } => 2.0 * (start - lower),
        }
    }
}

/// Step sizes and weights of the aggregated lower-level update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationSchedule {
    pub mu: f64,
    pub s_u: f64,
    pub s_l: f64,
    pub alpha: AlphaRule,
    pub beta: BetaRule,
    /// Allows `μ = 0` and `α_k = 0`, which reduce the scheme to plain descent,
    /// and lets the solver run step sizes beyond `1/L_F`, `1/L_f`.
    #[serde(default)]
    pub diagnostic: bool,
}

impl AggregationSchedule {
    /// The schedule used for the counter-example experiments:
    /// `μ = 0.1`, `α_k = 0.5/k`, `β_k = 1`, `s_u = s_l = 0.1`.
    pub fn reference() -> Self {
        AggregationSchedule {
            mu: 0.1,
            s_u: 0.1,
            s_l: 0.1,
            alpha: AlphaRule::Scaled { c: 0.5 },
            beta: BetaRule::Constant { b: 1.0 },
            diagnostic: false,
        }
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha.at(k)
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.beta.at(k)
    }

    pub fn beta_lower(&self) -> f64 {
        self.beta.lower()
    }

    pub fn c_beta(&self) -> f64 {
        self.beta.c_beta()
    }

    /// Checks the ranges of every parameter.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BdaError::Contract(msg));
        let mu_ok = if self.diagnostic { (0.0..1.0).contains(&self.mu) } else { self.mu > 0.0 && self.mu < 1.0 };
        if !mu_ok {
            return bad(format!("mu = {} outside (0, 1)", self.mu));
        }
        if !(self.s_u > 0.0 && self.s_u.is_finite() && self.s_l > 0.0 && self.s_l.is_finite()) {
            return bad(format!("step sizes must be positive, got s_u = {}, s_l = {}", self.s_u, self.s_l));
        }
        match self.alpha {
            AlphaRule::Scaled { c: v } | AlphaRule::Constant { a: v } if !(v > 0.0 && v <= 1.0) => {
                return bad(format!("alpha parameter {v} outside (0, 1]"));
            }
            AlphaRule::Zero if !self.diagnostic => {
                return bad("alpha rule `zero` needs diagnostic mode".into());
            }
            _ => {}
        }
        match self.beta {
            BetaRule::Constant { b } if !(b > 0.0 && b <= 1.0) => bad(format!("beta {b} outside (0, 1]")),
            BetaRule::Declining { start, lower } if !(lower > 0.0 && lower < start && start <= 1.0) => {
                bad(format!("declining beta needs 0 < lower < start ≤ 1, got {lower}, {start}"))
            }
            _ => Ok(()),
        }
    }

    /// `s_u < 1/L_F` and `s_l < 1/L_f` for whichever constants the problem declares.
    pub fn check_admissible(&self, problem: &dyn BilevelProblem) -> Result<()> {
        self.validate()?;
        let sm = problem.smoothness();
        if let Some(l) = sm.upper_lipschitz {
            if self.s_u * l >= 1.0 {
                return Err(BdaError::Contract(format!("s_u = {} not below 1/L_F = {}", self.s_u, 1.0 / l)));
            }
        }
        if let Some(l) = sm.lower_lipschitz {
            if self.s_l * l >= 1.0 {
                return Err(BdaError::Contract(format!("s_l = {} not below 1/L_f = {}", self.s_l, 1.0 / l)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    /// Aggregated upper/lower step.
    Bda,
    /// Projected gradient descent on `f` with constant step `s_l`.
    Plain,
}

/// One inner iterate. Record `k ≥ 1` also carries the auxiliary points and
/// the weights of the step that produced `y_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerRecord {
    pub k: usize,
    pub y: RealVector,
    pub z_u: Option<RealVector>,
    pub z_l: Option<RealVector>,
    pub f_val: f64,
    pub upper_val: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Coordinates clamped by the projection that produced `y`.
    pub proj_active: Vec<bool>,
}

impl InnerRecord {
    pub fn any_active(&self) -> bool {
        self.proj_active.iter().any(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerTrace {
    pub mode: InnerMode,
    pub records: Vec<InnerRecord>,
}

impl InnerTrace {
    pub fn final_y(&self) -> &RealVector {
        &self.records.last().expect("trace always holds y_0").y
    }

    pub fn steps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn any_projection_active(&self) -> bool {
        self.records.iter().any(InnerRecord::any_active)
    }
}

/// Result of one aggregated step.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedStep {
    pub y_next: RealVector,
    pub z_u: RealVector,
    pub z_l: RealVector,
    pub proj_active: Vec<bool>,
}

fn at_iteration(err: BdaError, k: usize) -> BdaError {
    match err {
        BdaError::Numerical { what, location } => BdaError::numerical(what, format!("{location}, inner iteration {k}")),
        other => other,
    }
}

fn checked(v: RealVector, what: &str) -> Result<RealVector> {
    ensure_finite(&v, what)?;
    Ok(v)
}

/// `(s_u ∇_y F(x, y), s_l ∇_y f(x, y))`.
pub fn descent_directions(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y: &RealVector,
    sched: &AggregationSchedule,
) -> Result<(RealVector, RealVector)> {
    let d_upper = checked(problem.grad_y_upper(x, y), "grad_y F")? * sched.s_u;
    let d_lower = checked(problem.grad_y_lower(x, y), "grad_y f")? * sched.s_l;
    Ok((d_upper, d_lower))
}

/// `y_{k+1} = Proj_Y(y_k − (μ α_k s_u ∇_y F + (1−μ) β_k s_l ∇_y f))` with the
/// auxiliary points `z^u = y_k − α_k s_u ∇_y F` and `z^l = y_k − β_k s_l ∇_y f`.
pub fn aggregated_step(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y: &RealVector,
    k: usize,
    sched: &AggregationSchedule,
) -> Result<AggregatedStep> {
    let (d_upper, d_lower) = descent_directions(problem, x, y, sched)?;
    let (alpha, beta, mu) = (sched.alpha(k), sched.beta(k), sched.mu);
    let z_u = y - &d_upper * alpha;
    let z_l = y - &d_lower * beta;
    let raw = y - (&d_upper * (mu * alpha) + &d_lower * ((1.0 - mu) * beta));
    let (y_next, proj_active) = problem.region_y().project_with_mask(&raw)?;
    Ok(AggregatedStep { y_next, z_u, z_l, proj_active })
}

fn plain_step_masked(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y: &RealVector,
    s_l: f64,
) -> Result<(RealVector, RealVector, Vec<bool>)> {
    let raw = y - checked(problem.grad_y_lower(x, y), "grad_y f")? * s_l;
    let (next, mask) = problem.region_y().project_with_mask(&raw)?;
    Ok((next, raw, mask))
}

/// `Proj_Y(y − s_l ∇_y f(x, y))`.
pub fn plain_gd_step(problem: &dyn BilevelProblem, x: &RealVector, y: &RealVector, s_l: f64) -> Result<RealVector> {
    if !(s_l > 0.0) {
        return Err(BdaError::Contract(format!("step size {s_l} must be positive")));
    }
    Ok(plain_step_masked(problem, x, y, s_l)?.0)
}

/// `Proj_Y(0)`.
pub fn default_y0(region: &BoxRegion) -> RealVector {
    project_box(&RealVector::zeros(region.dim()), region).expect("dimension matches by construction")
}

/// Runs `steps` inner iterations from `y0` (default `Proj_Y(0)`).
pub fn run_inner(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y0: Option<&RealVector>,
    steps: usize,
    sched: &AggregationSchedule,
    mode: InnerMode,
) -> Result<InnerTrace> {
    sched.validate()?;
    require_dim("x", x, problem.dim_x())?;
    let y0 = match y0 {
        Some(y) => {
            require_dim("y0", y, problem.dim_y())?;
            ensure_finite(y, "y0")?;
            y.clone()
        }
        None => default_y0(problem.region_y()),
    };
    let record = |k: usize, y: RealVector, z_u, z_l, alpha, beta, proj_active| -> Result<InnerRecord> {
        let f_val = problem.lower(x, &y);
        let upper_val = problem.upper(x, &y);
        if !f_val.is_finite() || !upper_val.is_finite() {
            return Err(BdaError::numerical("objective value", format!("inner iteration {k}")));
        }
        Ok(InnerRecord { k, y, z_u, z_l, f_val, upper_val, alpha, beta, proj_active })
    };
    let m = y0.len();
    let mut records = Vec::with_capacity(steps + 1);
    records.push(record(0, y0, None, None, 0.0, 0.0, vec![false; m])?);
    for k in 0..steps {
        let y = &records[k].y;
        let rec = match mode {
            InnerMode::Bda => {
                let st = aggregated_step(problem, x, y, k, sched).map_err(|e| at_iteration(e, k))?;
                record(k + 1, st.y_next, Some(st.z_u), Some(st.z_l), sched.alpha(k), sched.beta(k), st.proj_active)?
            }
            InnerMode::Plain => {
                let (next, raw, mask) = plain_step_masked(problem, x, y, sched.s_l).map_err(|e| at_iteration(e, k))?;
                record(k + 1, next, None, Some(raw), 0.0, 1.0, mask)?
            }
        };
        records.push(rec);
    }
    Ok(InnerTrace { mode, records })
}
