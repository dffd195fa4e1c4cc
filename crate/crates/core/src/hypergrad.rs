//! Hypergradient estimators: reverse and forward unrolling through the inner
//! iterations, the implicit-function estimator, and the one-stage
//! finite-difference scheme.
//!
//! The projection onto a box is differentiated with the 0/1 diagonal mask of
//! unclamped coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{BdaError, Result};
use crate::inner::{run_inner, AggregationSchedule, InnerMode, InnerTrace};
use crate::numerics::{ensure_finite, RealMatrix, RealVector};
use crate::problems::{require_dim, BilevelProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Reverse,
    Forward,
    Implicit,
    OneStage,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps_unrolled: usize,
    pub truncate_at: Option<usize>,
    pub projection_active: bool,
    pub cg_iterations: Option<usize>,
    pub cg_residual: Option<f64>,
    pub fd_eps: Option<f64>,
    /// One-stage only: whether the projected four-point formula was used.
    pub projected_branch: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypergradResult {
    pub gradient: RealVector,
    pub method: Estimator,
    pub diagnostics: Diagnostics,
}

/// Per-step weights `(a_k, b_k)` of `∇_y F` and `∇_y f` in the inner map.
fn step_weights(sched: &AggregationSchedule, mode: InnerMode, k: usize) -> (f64, f64) {
    match mode {
        InnerMode::Bda => (sched.mu * sched.alpha(k) * sched.s_u, (1.0 - sched.mu) * sched.beta(k) * sched.s_l),
        InnerMode::Plain => (0.0, sched.s_l),
    }
}

fn require_second_order(problem: &dyn BilevelProblem, mode: InnerMode) -> Result<()> {
    let so = problem.second_order();
    if !so.lower {
        return Err(BdaError::Capability(format!("{} does not provide hess_yy_lower / hess_yx_lower", problem.name())));
    }
    if mode == InnerMode::Bda && !so.upper {
        return Err(BdaError::Capability(format!("{} does not provide hess_yy_upper / hess_yx_upper", problem.name())));
    }
    Ok(())
}

fn missing(field: &str) -> BdaError {
    BdaError::Capability(format!("problem returned no {field}"))
}

fn apply_mask(v: &mut RealVector, mask: &[bool]) {
    for (e, &clamped) in v.iter_mut().zip(mask) {
        if clamped {
            *e = 0.0;
        }
    }
}

fn finite(v: RealVector, what: &str) -> Result<RealVector> {
    ensure_finite(&v, what)?;
    Ok(v)
}

/// Reverse-mode accumulation over an existing trace. `truncate_at = Some(t)`
/// keeps only the last `t` steps.
pub fn reverse_from_trace(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    trace: &InnerTrace,
    sched: &AggregationSchedule,
    truncate_at: Option<usize>,
) -> Result<HypergradResult> {
    let steps = trace.steps();
    let keep = truncate_at.unwrap_or(steps);
    if keep > steps {
        return Err(BdaError::Contract(format!("truncate_at = {keep} exceeds K = {steps}")));
    }
    if keep > 0 {
        require_second_order(problem, trace.mode)?;
    }
    let y_k = trace.final_y();
    let mut acc = finite(problem.grad_x_upper(x, y_k), "grad_x F")?;
    let mut g = finite(problem.grad_y_upper(x, y_k), "grad_y F")?;
    for k in (steps - keep..steps).rev() {
        let (a, b) = step_weights(sched, trace.mode, k);
        let y = &trace.records[k].y;
        let mut v = g;
        apply_mask(&mut v, &trace.records[k + 1].proj_active);
        let mut cross = problem.hvp_xy_lower(x, y, &v).ok_or_else(|| missing("hvp_xy_lower"))? * b;
        let mut next = &v - problem.hvp_yy_lower(x, y, &v).ok_or_else(|| missing("hvp_yy_lower"))? * b;
        if a != 0.0 {
            cross += problem.hvp_xy_upper(x, y, &v).ok_or_else(|| missing("hvp_xy_upper"))? * a;
            next -= problem.hvp_yy_upper(x, y, &v).ok_or_else(|| missing("hvp_yy_upper"))? * a;
        }
        acc -= cross;
        g = next;
        ensure_finite(&g, "reverse adjoint")
            .map_err(|_| BdaError::numerical("reverse adjoint", format!("backward step {k}")))?;
    }
    ensure_finite(&acc, "hypergradient")?;
    Ok(HypergradResult {
        gradient: acc,
        method: Estimator::Reverse,
        diagnostics: Diagnostics {
            steps_unrolled: keep,
            truncate_at,
            projection_active: trace.any_projection_active(),
            ..Default::default()
        },
    })
}

/// `∇φ_K(x)` by unrolling `steps` inner iterations backwards.
pub fn hypergrad_reverse(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y0: Option<&RealVector>,
    steps: usize,
    sched: &AggregationSchedule,
    mode: InnerMode,
    truncate_at: Option<usize>,
) -> Result<HypergradResult> {
    if truncate_at.unwrap_or(0) > 0 || (truncate_at.is_none() && steps > 0) {
        require_second_order(problem, mode)?;
    }
    let trace = run_inner(problem, x, y0, steps, sched, mode)?;
    reverse_from_trace(problem, x, &trace, sched, truncate_at)
}

/// Forward propagation of `∂y_k/∂x` over an existing trace.
pub fn forward_from_trace(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    trace: &InnerTrace,
    sched: &AggregationSchedule,
    strict: bool,
) -> Result<HypergradResult> {
    let steps = trace.steps();
    if steps > 0 {
        require_second_order(problem, trace.mode)?;
    }
    let (n, m) = (problem.dim_x(), problem.dim_y());
    let mut jac = RealMatrix::zeros(m, n);
    for k in 0..steps {
        let mask = &trace.records[k + 1].proj_active;
        if strict && mask.iter().any(|&c| c) {
            return Err(BdaError::Contract(format!(
                "projection active at inner step {k}; strict forward mode refuses"
            )));
        }
        let (a, b) = step_weights(sched, trace.mode, k);
        let y = &trace.records[k].y;
        let mut hyy = problem.hess_yy_lower(x, y).ok_or_else(|| missing("hess_yy_lower"))? * b;
        let mut hyx = problem.hess_yx_lower(x, y).ok_or_else(|| missing("hess_yx_lower"))? * b;
        if a != 0.0 {
            hyy += problem.hess_yy_upper(x, y).ok_or_else(|| missing("hess_yy_upper"))? * a;
            hyx += problem.hess_yx_upper(x, y).ok_or_else(|| missing("hess_yx_upper"))? * a;
        }
        let mut next = &jac - hyy * &jac - hyx;
        for (i, &clamped) in mask.iter().enumerate() {
            if clamped {
                next.row_mut(i).fill(0.0);
            }
        }
        jac = next;
    }
    let y_k = trace.final_y();
    let gx = finite(problem.grad_x_upper(x, y_k), "grad_x F")?;
    let gy = finite(problem.grad_y_upper(x, y_k), "grad_y F")?;
    let gradient = gx + jac.tr_mul(&gy);
    ensure_finite(&gradient, "hypergradient")?;
    Ok(HypergradResult {
        gradient,
        method: Estimator::Forward,
        diagnostics: Diagnostics {
            steps_unrolled: steps,
            projection_active: trace.any_projection_active(),
            ..Default::default()
        },
    })
}

/// `∇φ_K(x)` by forward Jacobian propagation. With `strict`, an active
/// projection anywhere on the trajectory is an error.
pub fn hypergrad_forward(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y0: Option<&RealVector>,
    steps: usize,
    sched: &AggregationSchedule,
    mode: InnerMode,
    strict: bool,
) -> Result<HypergradResult> {
    if steps > 0 {
        require_second_order(problem, mode)?;
    }
    let trace = run_inner(problem, x, y0, steps, sched, mode)?;
    forward_from_trace(problem, x, &trace, sched, strict)
}

/// Solution of a conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub solution: RealVector,
    pub iterations: usize,
    /// `‖b − A q‖ / ‖b‖` (absolute when `b = 0`).
    pub relative_residual: f64,
}

/// Curvature ratios below this fraction of the largest one seen are treated
/// as a singular or indefinite operator.
const CURVATURE_FLOOR: f64 = 1e-12;

/// Conjugate gradient on `A q = b` for a symmetric operator given as a product.
pub fn conjugate_gradient<F>(apply: F, b: &RealVector, tol: f64, max_iter: usize) -> Result<CgSolution>
where
    F: Fn(&RealVector) -> Result<RealVector>,
{
    let b_norm = b.norm();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut q = RealVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut max_ratio: f64 = 0.0;
    let mut iterations = 0;
    while rr.sqrt() > tol * scale {
        if iterations == max_iter {
            return Err(BdaError::Convergence { iterations, residual: rr.sqrt() / scale });
        }
        let ap = apply(&p)?;
        let curvature = p.dot(&ap);
        let ratio = curvature / p.norm_squared();
        if !(ratio > 0.0) || ratio <= CURVATURE_FLOOR * max_ratio {
            return Err(BdaError::Capability(format!(
                "lower-level Hessian is not positive definite (curvature ratio {ratio:e} at CG iteration {iterations})"
            )));
        }
        max_ratio = max_ratio.max(ratio);
        let step = rr / curvature;
        q.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rr_next = r.norm_squared();
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
        iterations += 1;
    }
    Ok(CgSolution { solution: q, iterations, relative_residual: rr.sqrt() / scale })
}

/// `∇φ(x) = ∇_x F − (∇_yx f)ᵀ (∇_yy f)⁻¹ ∇_y F`, all at `(x, y_hat)`.
pub fn hypergrad_implicit(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y_hat: &RealVector,
    cg_tol: f64,
    cg_max_iter: usize,
) -> Result<HypergradResult> {
    require_dim("x", x, problem.dim_x())?;
    require_dim("y_hat", y_hat, problem.dim_y())?;
    if !problem.second_order().lower {
        return Err(BdaError::Capability(format!("{} does not provide hess_yy_lower / hess_yx_lower", problem.name())));
    }
    let gy = finite(problem.grad_y_upper(x, y_hat), "grad_y F")?;
    let cg = conjugate_gradient(
        |v| problem.hvp_yy_lower(x, y_hat, v).ok_or_else(|| missing("hvp_yy_lower")),
        &gy,
        cg_tol,
        cg_max_iter,
    )?;
    let cross = problem.hvp_xy_lower(x, y_hat, &cg.solution).ok_or_else(|| missing("hvp_xy_lower"))?;
    let gradient = finite(problem.grad_x_upper(x, y_hat), "grad_x F")? - cross;
    ensure_finite(&gradient, "hypergradient")?;
    Ok(HypergradResult {
        gradient,
        method: Estimator::Implicit,
        diagnostics: Diagnostics {
            cg_iterations: Some(cg.iterations),
            cg_residual: Some(cg.relative_residual),
            ..Default::default()
        },
    })
}

/// The single-step objective `φ = αF + βf` with the aggregation weights
/// folded in, so one plain step of size `s_l` on `φ` is one aggregated step.
#[derive(Debug, Clone, Copy)]
struct OneStageWeights {
    s: f64,
    alpha: f64,
    beta: f64,
}

impl OneStageWeights {
    fn new(sched: &AggregationSchedule) -> Self {
        OneStageWeights {
            s: sched.s_l,
            alpha: sched.mu * sched.alpha(0) * sched.s_u / sched.s_l,
            beta: (1.0 - sched.mu) * sched.beta(0),
        }
    }

    fn grad_x(&self, p: &dyn BilevelProblem, x: &RealVector, y: &RealVector) -> RealVector {
        p.grad_x_upper(x, y) * self.alpha + p.grad_x_lower(x, y) * self.beta
    }

    fn grad_y(&self, p: &dyn BilevelProblem, x: &RealVector, y: &RealVector) -> RealVector {
        p.grad_y_upper(x, y) * self.alpha + p.grad_y_lower(x, y) * self.beta
    }
}

/// One-stage hypergradient: a single aggregated step from `y0`, with the
/// second-order term replaced by finite differences of `∂_x φ`.
pub fn hypergrad_onestage(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    y0: &RealVector,
    sched: &AggregationSchedule,
    eps: f64,
) -> Result<HypergradResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(BdaError::Contract(format!("finite-difference step {eps} must be positive")));
    }
    sched.validate()?;
    require_dim("x", x, problem.dim_x())?;
    require_dim("y0", y0, problem.dim_y())?;
    let w = OneStageWeights::new(sched);
    let z0 = y0 - finite(w.grad_y(problem, x, y0), "grad_y φ")? * w.s;
    let region = problem.region_y();
    let (y1, mask) = region.project_with_mask(&z0)?;
    let projected = mask.iter().any(|&c| c);
    let g = finite(problem.grad_y_upper(x, &y1), "grad_y F")?;
    let base = finite(problem.grad_x_upper(x, &y1), "grad_x F")?;
    let nonzero = g.iter().any(|&v| v != 0.0);

    let correction = if !projected {
        let h_plus = y0 + &g * eps;
        let h_minus = y0 - &g * eps;
        if nonzero && h_plus == h_minus {
            return Err(BdaError::DegenerateEpsilon { eps });
        }
        (w.grad_x(problem, x, &h_plus) - w.grad_x(problem, x, &h_minus)) * (w.s / (2.0 * eps))
    } else {
        let root = eps.sqrt();
        let (z_plus, z_minus) = (&z0 + &g * root, &z0 - &g * root);
        if nonzero && z_plus == z_minus {
            return Err(BdaError::DegenerateEpsilon { eps });
        }
        let w_plus = region.project_with_mask(&z_plus)?.0;
        let w_minus = region.project_with_mask(&z_minus)?.0;
        let probe = |dir: &RealVector| -> Result<RealVector> {
            let hp = y0 + dir * eps;
            let hm = y0 - dir * eps;
            if dir.iter().any(|&v| v != 0.0) && hp == hm {
                return Err(BdaError::DegenerateEpsilon { eps });
            }
            Ok(w.grad_x(problem, x, &hp) - w.grad_x(problem, x, &hm))
        };
        (probe(&w_plus)? - probe(&w_minus)?) * (w.s / (4.0 * eps * root))
    };
    let gradient = base - correction;
    ensure_finite(&gradient, "hypergradient")?;
    Ok(HypergradResult {
        gradient,
        method: Estimator::OneStage,
        diagnostics: Diagnostics {
            steps_unrolled: 1,
            projection_active: projected,
            fd_eps: Some(eps),
            projected_branch: Some(projected),
            ..Default::default()
        },
    })
}
