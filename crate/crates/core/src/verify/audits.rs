use serde::{Deserialize, Serialize};

use super::{CheckReport, TOLERANCES};
use crate::error::{BdaError, Result};
use crate::hypergrad::hypergrad_forward;
use crate::inner::{AggregationSchedule, InnerMode, InnerTrace};
use crate::numerics::{rng_stream, RealVector};
use crate::problems::BilevelProblem;

fn lipschitz_pair(problem: &dyn BilevelProblem) -> Result<(f64, f64)> {
    let sm = problem.smoothness();
    match (sm.upper_lipschitz, sm.lower_lipschitz) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(BdaError::Capability(format!("{}: L_F and L_f must be declared", problem.name()))),
    }
}

/// Slack of the one-step descent inequality at step `k` (from `y_k` to
/// `y_{k+1}`) for the test point `y_tilde`: left side minus right side.
pub fn descent_slack(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    trace: &InnerTrace,
    sched: &AggregationSchedule,
    k: usize,
    y_tilde: &RealVector,
) -> Result<f64> {
    let (l_upper, l_lower) = lipschitz_pair(problem)?;
    if trace.mode != InnerMode::Bda || k + 1 >= trace.records.len() {
        return Err(BdaError::Contract(format!("need a bda trace with step {k}")));
    }
    let (mu, s_u, s_l) = (sched.mu, sched.s_u, sched.s_l);
    let (alpha, beta) = (sched.alpha(k), sched.beta(k));
    let y_k = &trace.records[k].y;
    let next = &trace.records[k + 1];
    let y_next = &next.y;
    let z_u = next.z_u.as_ref().expect("bda record carries z^u");
    let z_l = next.z_l.as_ref().expect("bda record carries z^l");
    let w_upper = mu * s_u * alpha / s_l;
    let w_lower = (1.0 - mu) * beta;
    let half = 0.5 / s_l;

    let lhs = w_lower * problem.lower(x, y_tilde) + w_upper * problem.upper(x, y_tilde);
    let combo = z_l * (1.0 - mu) + z_u * mu;
    let rhs = w_lower * problem.lower(x, z_l)
        + w_upper * problem.upper(x, z_u)
        + mu * half * (1.0 - alpha * s_u * l_upper) * (y_k - z_u).norm_squared()
        + half * (y_tilde - y_next).norm_squared()
        + half * (combo - y_next).norm_squared()
        + (1.0 - mu) * half * (1.0 - beta * s_l * l_lower) * (y_k - z_l).norm_squared()
        - half * (y_tilde - y_k).norm_squared();
    Ok(lhs - rhs)
}

/// Audits the descent inequality at `num_test_points` random `(k, ỹ)` pairs,
/// plus `ỹ = y_k` at every step. `ỹ` is drawn from `Y`; unbounded sides are
/// replaced by the trajectory's bounding box padded by one unit.
pub fn check_descent_inequality(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    trace: &InnerTrace,
    sched: &AggregationSchedule,
    num_test_points: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("descent_inequality");
    if let Err(e) = sched.check_admissible(problem) {
        report.breach(e.to_string());
    }
    let steps = trace.steps();
    if steps == 0 {
        return Err(BdaError::Contract("trace has no steps to audit".into()));
    }
    let region = problem.region_y();
    let m = problem.dim_y();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for rec in &trace.records {
        for i in 0..m {
            lo[i] = lo[i].min(rec.y[i]);
            hi[i] = hi[i].max(rec.y[i]);
        }
    }
    for i in 0..m {
        lo[i] = region.lower(i).value().unwrap_or(lo[i] - 1.0);
        hi[i] = region.upper(i).value().unwrap_or(hi[i] + 1.0);
    }

    let tol = TOLERANCES.descent_slack;
    for k in 0..steps {
        let slack = descent_slack(problem, x, trace, sched, k, &trace.records[k].y)?;
        report.observe(slack, tol, || format!("k = {k}, test point y_k"));
    }
    let mut rng = rng_stream(seed);
    for j in 0..num_test_points {
        let k = rng.index(steps);
        let y_tilde = RealVector::from_fn(m, |i, _| rng.uniform_in(lo[i], hi[i]));
        let slack = descent_slack(problem, x, trace, sched, k, &y_tilde)?;
        report.observe(slack, tol, || format!("k = {k}, random test point {j}"));
    }
    Ok(report)
}

/// `‖z^l_{k+1} − ȳ‖ ≤ ‖y_k − ȳ‖` along the trace, `ȳ` a lower-level solution.
pub fn check_nonexpansive(problem: &dyn BilevelProblem, x: &RealVector, trace: &InnerTrace) -> Result<CheckReport> {
    let y_bar = problem
        .lower_solution(x)
        .ok_or_else(|| BdaError::Capability(format!("{}: no known lower-level solution", problem.name())))?;
    let mut report = CheckReport::new("nonexpansive");
    for k in 0..trace.steps() {
        let z_l = trace.records[k + 1]
            .z_l
            .as_ref()
            .ok_or_else(|| BdaError::Contract("trace lacks auxiliary points".into()))?;
        let margin = (&trace.records[k].y - &y_bar).norm() - (z_l - &y_bar).norm();
        report.observe(margin, TOLERANCES.nonexpansive_slack, || format!("k = {k}"));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub k_list: Vec<usize>,
    /// Grid maximum of `‖∇φ_k(x) − ∇φ(x)‖` for each `k`.
    pub sup_errors: Vec<f64>,
}

/// For each `k`, the largest hypergradient error over `grid`, with `∇φ_k`
/// from forward propagation through `k` aggregated steps.
pub fn check_stationarity(
    problem: &dyn BilevelProblem,
    grid: &[RealVector],
    sched: &AggregationSchedule,
    k_list: &[usize],
) -> Result<StationarityReport> {
    let mut sup_errors = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut worst: f64 = 0.0;
        for x in grid {
            let exact = problem
                .value_function_grad(x)
                .ok_or_else(|| BdaError::Capability(format!("{}: no analytic ∇φ at {x}", problem.name())))?;
            let est = hypergrad_forward(problem, x, None, k, sched, InnerMode::Bda, false)?;
            worst = worst.max((est.gradient - exact).norm());
        }
        sup_errors.push(worst);
    }
    Ok(StationarityReport { k_list: k_list.to_vec(), sup_errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::{run_inner, AlphaRule, BetaRule};
    use crate::numerics::{BoxRegion, RealMatrix};
    use crate::problems::{Counterexample, LlsQuadratic, Remark1};
    use crate::verify::CheckStatus;

    fn sched(s_l: f64) -> AggregationSchedule {
        AggregationSchedule {
            mu: 0.3,
            s_u: 0.5,
            s_l,
            alpha: AlphaRule::Harmonic,
            beta: BetaRule::Declining { start: 1.0, lower: 0.5 },
            diagnostic: false,
        }
    }

    #[test]
    fn descent_inequality_on_lls() {
        let p = LlsQuadratic::random(3, 4, 11).unwrap();
        let s = sched(0.9 / p.smoothness().lower_lipschitz.unwrap());
        let x = RealVector::from_vec(vec![0.5, -0.2, 0.9]);
        let tr = run_inner(&p, &x, None, 30, &s, InnerMode::Bda).unwrap();
        let rep = check_descent_inequality(&p, &x, &tr, &s, 100, 5).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.worst_margin >= -1e-9);
    }

    #[test]
    fn oversized_step_is_flagged() {
        let p = Remark1::new();
        let s = AggregationSchedule { s_u: 0.5, ..sched(2.0) };
        let x = RealVector::from_vec(vec![1.0]);
        let tr = run_inner(&p, &x, None, 10, &s, InnerMode::Bda).unwrap();
        let rep = check_descent_inequality(&p, &x, &tr, &s, 50, 1).unwrap();
        assert_eq!(rep.status, CheckStatus::HypothesisBreach);
    }

    #[test]
    fn nonexpansive_on_counterexample() {
        let p = Counterexample::new(4).unwrap();
        let x = RealVector::from_vec(vec![0.3, -1.0, 2.0, 0.5]);
        let tr = run_inner(&p, &x, None, 50, &AggregationSchedule::reference(), InnerMode::Bda).unwrap();
        assert!(check_nonexpansive(&p, &x, &tr).unwrap().passed());
    }

    #[test]
    fn stationarity_decoupled_and_zero_steps() {
        let p = LlsQuadratic::from_parts(
            RealMatrix::identity(2, 2) * 2.0,
            RealMatrix::zeros(2, 1),
            RealVector::from_vec(vec![1.0, 0.5]),
            0.4,
            BoxRegion::cube(1, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let grid: Vec<RealVector> = (0..11).map(|i| RealVector::from_element(1, -1.0 + 0.2 * i as f64)).collect();
        let s = sched(0.25);
        let rep = check_stationarity(&p, &grid, &s, &[0, 1, 10]).unwrap();
        assert!(rep.sup_errors.iter().all(|&e| e == 0.0));

        let coupled = LlsQuadratic::random(1, 3, 4).unwrap();
        let s = sched(0.5 / coupled.smoothness().lower_lipschitz.unwrap());
        let rep = check_stationarity(&coupled, &grid, &s, &[0]).unwrap();
        let y0 = RealVector::zeros(3);
        let expected = grid
            .iter()
            .map(|x| (coupled.grad_x_upper(x, &y0) - coupled.value_function_grad(x).unwrap()).norm())
            .fold(0.0, f64::max);
        assert_eq!(rep.sup_errors[0], expected);
    }
}
