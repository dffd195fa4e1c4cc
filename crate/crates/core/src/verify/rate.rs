use serde::{Deserialize, Serialize};

use super::{CheckReport, TOLERANCES};
use crate::error::{BdaError, Result};
use crate::inner::{run_inner, AggregationSchedule, AlphaRule, InnerMode, InnerTrace};
use crate::numerics::{rng_stream, BoxRegion, RealVector};
use crate::problems::BilevelProblem;

/// Constants of the lower-level rate bound at one upper-level point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    /// Diameter of `Y`.
    pub d: f64,
    /// `sup ‖∇_y F‖` over `X × Y`.
    pub m_upper: f64,
    /// `sup ‖∇_y f‖` over `X × Y`.
    pub m_lower: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub beta_lower: f64,
    pub c_beta: f64,
    pub s_l: f64,
    pub s_u: f64,
    pub mu: f64,
    pub l_upper: f64,
    pub l_lower: f64,
}

impl RateConstants {
    /// `2 C2 + C3`.
    pub fn numerator(&self) -> f64 {
        2.0 * self.c2 + self.c3
    }

    /// Bound on `‖y_k − z^l_{k+1}‖²`.
    pub fn step_bound(&self, k: usize) -> f64 {
        self.numerator() / self.beta_lower.powi(2) * decay(k)
    }

    /// Bound on `f(z^l_{k+1}) − f*`.
    pub fn gap_bound(&self, k: usize) -> f64 {
        self.d / (self.beta_lower.powi(2) * self.s_l) * (self.numerator() * decay(k)).sqrt()
    }

    /// Copy with `C2` and `C3` multiplied by `factor`; used as a negative control.
    pub fn scaled(&self, factor: f64) -> Self {
        RateConstants { c2: self.c2 * factor, c3: self.c3 * factor, ..*self }
    }
}

/// `(1 + ln k) / k^{1/4}`.
fn decay(k: usize) -> f64 {
    let k = k as f64;
    (1.0 + k.ln()) / k.powf(0.25)
}

fn sample_point(region: &BoxRegion, rng: &mut crate::numerics::RngStream) -> RealVector {
    RealVector::from_fn(region.dim(), |i, _| {
        let lo = region.lower(i).value().unwrap_or(0.0);
        let hi = region.upper(i).value().unwrap_or(0.0);
        rng.uniform_in(lo, hi)
    })
}

fn random_corner(region: &BoxRegion, rng: &mut crate::numerics::RngStream) -> (RealVector, RealVector) {
    let signs: Vec<bool> = (0..region.dim()).map(|_| rng.bool()).collect();
    let flipped: Vec<bool> = signs.iter().map(|s| !s).collect();
    (region.corner(&signs).expect("compact region"), region.corner(&flipped).expect("compact region"))
}

/// Estimates `D`, `M_F`, `M_f` from `samples` corner pairs and interior points
/// (inflated by the declared margin) and evaluates `C0`–`C3` at `x`.
pub fn compute_rate_constants(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    sched: &AggregationSchedule,
    samples: usize,
    seed: u64,
) -> Result<RateConstants> {
    let (rx, ry) = (problem.region_x(), problem.region_y());
    if !rx.is_compact() || !ry.is_compact() {
        return Err(BdaError::Capability(format!("{}: rate constants need compact X and Y", problem.name())));
    }
    let sm = problem.smoothness();
    let (l_upper, l_lower) = match (sm.upper_lipschitz, sm.lower_lipschitz) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(BdaError::Capability(format!("{}: L_F and L_f must be declared", problem.name()))),
    };
    let m0 = problem
        .upper_lower_bound()
        .ok_or_else(|| BdaError::Capability(format!("{}: no lower bound M0 for F", problem.name())))?;
    let phi = problem
        .value_function(x)
        .ok_or_else(|| BdaError::Capability(format!("{}: no value function", problem.name())))?;

    let mut rng = rng_stream(seed);
    let (mut d, mut m_upper, mut m_lower): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut visit = |xs: &RealVector, ys: &RealVector| {
        m_upper = m_upper.max(problem.grad_y_upper(xs, ys).norm());
        m_lower = m_lower.max(problem.grad_y_lower(xs, ys).norm());
    };
    for i in 0..samples.max(1) {
        let (ya, yb) = random_corner(ry, &mut rng);
        d = d.max((&ya - &yb).norm());
        let (xa, xb) = random_corner(rx, &mut rng);
        let (xi, yi) = (sample_point(rx, &mut rng), sample_point(ry, &mut rng));
        for xs in [&xa, &xb, &xi] {
            for ys in [&ya, &yb, &yi] {
                visit(xs, ys);
            }
        }
        if i == 0 {
            visit(x, &ya);
        }
    }
    let inflate = 1.0 + TOLERANCES.sup_inflation;
    let (d, m_upper, m_lower) = (d * inflate, m_upper * inflate, m_lower * inflate);

    let (mu, s_u, s_l) = (sched.mu, sched.s_u, sched.s_l);
    let (beta_lower, c_beta) = (sched.beta_lower(), sched.c_beta());
    let c0 = f64::max(2.0 + c_beta.powi(2) / beta_lower.powi(2), 3.0);
    let head = d * d + 2.0 * s_u * (phi - m0);
    let denom = f64::min(f64::min(1.0 - s_l * l_lower, 1.0 - s_u * l_upper), 1.0);
    if !(denom > 0.0) || !(mu > 0.0 && mu < 1.0) {
        return Err(BdaError::Contract(format!(
            "rate constants need s_u < 1/L_F, s_l < 1/L_f and mu in (0, 1); got s_u L_F = {}, s_l L_f = {}",
            s_u * l_upper,
            s_l * l_lower
        )));
    }
    let c1 = (c0 * head + 2.0 * mu * s_u * d * m_upper + 2.0 * (1.0 - mu) * s_l * c_beta * d * m_lower) / denom;
    let c2 = (s_l.powi(2) * l_lower.powi(2) * d + 4.0 * d * l_lower / beta_lower) * c1.sqrt();
    let c3 = head / ((1.0 - mu) * (1.0 - s_l * l_lower));
    let out = RateConstants { d, m_upper, m_lower, c0, c1, c2, c3, beta_lower, c_beta, s_l, s_u, mu, l_upper, l_lower };
    for (name, v) in [("C1", c1), ("C2", c2), ("C3", c3), ("D", d)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(BdaError::numerical("rate constants", format!("{name} = {v}")));
        }
    }
    Ok(out)
}

/// Evaluates both rate inequalities for `k ∈ [2, k_max]` along `trace`, which
/// must hold at least `k_max + 2` iterates.
pub fn check_rate_bound_on_trace(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    trace: &InnerTrace,
    constants: &RateConstants,
    k_max: usize,
) -> Result<CheckReport> {
    if k_max < 2 || trace.steps() < k_max + 1 {
        return Err(BdaError::Contract(format!(
            "need k_max ≥ 2 and a trace of at least k_max + 1 steps, got {k_max} and {}",
            trace.steps()
        )));
    }
    let f_star = problem
        .lower_optimal_value(x)
        .ok_or_else(|| BdaError::Capability(format!("{}: f* unavailable", problem.name())))?;
    let mut report = CheckReport::new("rate_bound");
    for k in 2..=k_max {
        let y_k = &trace.records[k].y;
        let z_l = trace.records[k + 1].z_l.as_ref().expect("bda trace stores z^l");
        let step = (y_k - z_l).norm_squared();
        report.observe(constants.step_bound(k) - step, 0.0, || format!("step inequality, k = {k}"));
        let gap = problem.lower(x, z_l) - f_star;
        report.observe(constants.gap_bound(k) - gap, 0.0, || format!("gap inequality, k = {k}"));
    }
    Ok(report)
}

/// Runs the inner loop at `x` and checks the rate inequalities with freshly
/// computed constants. Non-harmonic `α_k` is reported as a hypothesis breach.
pub fn check_rate_bound(
    problem: &dyn BilevelProblem,
    x: &RealVector,
    sched: &AggregationSchedule,
    k_max: usize,
) -> Result<CheckReport> {
    let constants = compute_rate_constants(problem, x, sched, 256, 0)?;
    let trace = run_inner(problem, x, None, k_max + 1, sched, InnerMode::Bda)?;
    let mut report = check_rate_bound_on_trace(problem, x, &trace, &constants, k_max)?;
    if sched.alpha != AlphaRule::Harmonic {
        report.breach("alpha_k is not 1/(k+1)".into());
    }
    if let Err(e) = sched.check_admissible(problem) {
        report.breach(e.to_string());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::{BetaRule, InnerRecord};
    use crate::problems::{Counterexample, LlsQuadratic};

    fn sched() -> AggregationSchedule {
        AggregationSchedule {
            mu: 0.5,
            s_u: 1.0 / 1080.0,
            s_l: 0.5,
            alpha: AlphaRule::Harmonic,
            beta: BetaRule::Constant { b: 1.0 },
            diagnostic: false,
        }
    }

    fn compact() -> Counterexample {
        Counterexample::with_regions(5, 1.0, Some(2.0)).unwrap()
    }

    #[test]
    fn c0_without_beta_variation() {
        let c = compute_rate_constants(&compact(), &RealVector::from_element(5, 0.5), &sched(), 16, 1).unwrap();
        assert_eq!(c.c0, 3.0);
    }

    #[test]
    fn diameter_of_square() {
        let p = LlsQuadratic::from_parts(
            crate::numerics::RealMatrix::identity(2, 2),
            crate::numerics::RealMatrix::identity(2, 2),
            RealVector::zeros(2),
            0.0,
            BoxRegion::cube(2, -1.0, 1.0).unwrap(),
        )
        .unwrap()
        .with_region_y(BoxRegion::cube(2, -1.0, 1.0).unwrap())
        .unwrap();
        let s = AggregationSchedule { s_u: 0.5, ..sched() };
        let c = compute_rate_constants(&p, &RealVector::zeros(2), &s, 8, 3).unwrap();
        let exact = 2.0 * 2f64.sqrt();
        assert!(c.d >= 0.95 * exact && c.d <= 1.05 * exact + 1e-12);
    }

    #[test]
    fn c3_grows_with_upper_step() {
        let p = compact();
        let x = RealVector::from_element(5, 0.5);
        let base = AggregationSchedule { s_u: 1.0 / 2160.0, ..sched() };
        let a = compute_rate_constants(&p, &x, &base, 16, 1).unwrap();
        let b = compute_rate_constants(&p, &x, &AggregationSchedule { s_u: 2.0 * base.s_u, ..base }, 16, 1).unwrap();
        assert!(b.c3 >= a.c3);
        let c = AggregationSchedule { s_u: 4.0 * base.s_u, ..base };
        assert!(compute_rate_constants(&p, &x, &c, 16, 1).is_err());
        assert!(b.c3 >= a.c3);
    }

    #[test]
    fn unbounded_region_rejected() {
        let p = Counterexample::new(2).unwrap();
        let err = compute_rate_constants(&p, &RealVector::zeros(2), &sched(), 4, 0).unwrap_err();
        assert!(matches!(err, BdaError::Capability(_)));
    }

    #[test]
    fn bound_holds_and_negative_control_fails() {
        let p = compact();
        let x = RealVector::from_element(5, 0.5);
        let rep = check_rate_bound(&p, &x, &sched(), 60).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let c = compute_rate_constants(&p, &x, &sched(), 64, 0).unwrap().scaled(1e-6);
        let tr = run_inner(&p, &x, None, 61, &sched(), InnerMode::Bda).unwrap();
        let bad = check_rate_bound_on_trace(&p, &x, &tr, &c, 60).unwrap();
        assert!(!bad.violations.is_empty());
    }

    #[test]
    fn zero_gap_trace_passes() {
        let p = compact();
        let x = RealVector::from_element(5, 0.5);
        let y = p.lower_solution(&x).unwrap();
        let rec = |k| InnerRecord {
            k,
            y: y.clone(),
            z_u: Some(y.clone()),
            z_l: Some(y.clone()),
            f_val: 0.0,
            upper_val: 0.0,
            alpha: 1.0,
            beta: 1.0,
            proj_active: vec![false; 10],
        };
        let tr = InnerTrace { mode: InnerMode::Bda, records: (0..12).map(rec).collect() };
        let c = compute_rate_constants(&p, &x, &sched(), 16, 0).unwrap();
        assert!(check_rate_bound_on_trace(&p, &x, &tr, &c, 10).unwrap().passed());
    }
}
