//! The upper-level loop: projected gradient descent on `φ_K`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{BdaError, Result};
use crate::hypergrad::{hypergrad_implicit, hypergrad_onestage, reverse_from_trace, HypergradResult};
use crate::inner::{default_y0, run_inner, AggregationSchedule, InnerMode, InnerTrace};
use crate::numerics::{ensure_finite, project_box, rng_stream, BoxRegion, RealVector};
use crate::problems::{require_dim, BilevelProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bda,
    Rhg,
    Trhg,
    Ihg,
    Obda,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Bda, Method::Rhg, Method::Trhg, Method::Ihg, Method::Obda];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bda => "bda",
            Method::Rhg => "rhg",
            Method::Trhg => "trhg",
            Method::Ihg => "ihg",
            Method::Obda => "obda",
        }
    }

    pub fn inner_mode(self) -> InnerMode {
        match self {
            Method::Bda | Method::Obda => InnerMode::Bda,
            Method::Rhg | Method::Trhg | Method::Ihg => InnerMode::Plain,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = BdaError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| BdaError::Config(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_stop_tol() -> f64 {
    1e-8
}
fn default_fd_eps() -> f64 {
    1e-4
}
fn default_cg_tol() -> f64 {
    1e-10
}
fn default_cg_max_iter() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    #[serde(rename = "K")]
    pub k: usize,
    /// T-RHG only; defaults to `K/2` (at least 1).
    #[serde(default)]
    pub truncate_at: Option<usize>,
    /// Upper-level step; estimated from a local Lipschitz probe when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    pub sched: AggregationSchedule,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `Proj_X(0)`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Inner start, reused at every outer iteration. Defaults to `Proj_Y(0)`.
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_max_iter")]
    pub cg_max_iter: usize,
    /// Fill the per-row wall-clock column. Off by default so traces are reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl SolverConfig {
    pub fn new(method: Method, k: usize, t_max: usize, sched: AggregationSchedule) -> Self {
        SolverConfig {
            method,
            k,
            truncate_at: None,
            lambda: None,
            t_max,
            stop_tol: default_stop_tol(),
            sched,
            seed: 0,
            x0: None,
            y0: None,
            fd_eps: default_fd_eps(),
            cg_tol: default_cg_tol(),
            cg_max_iter: default_cg_max_iter(),
            record_wall_time: false,
        }
    }

    /// Inner steps actually run: one-stage always uses a single step.
    pub fn inner_steps(&self) -> usize {
        if self.method == Method::Obda {
            1
        } else {
            self.k
        }
    }

    pub fn truncation(&self) -> Option<usize> {
        match self.method {
            Method::Trhg => Some(self.truncate_at.unwrap_or((self.k / 2).max(1))),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BdaError::Contract(m));
        if self.t_max == 0 {
            return bad("T_max must be at least 1".into());
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda = {l} must be positive"));
            }
        }
        if let Some(t) = self.truncation() {
            if t > self.k {
                return bad(format!("truncate_at = {t} exceeds K = {}", self.k));
            }
        }
        if !(self.stop_tol >= 0.0) || !(self.fd_eps > 0.0) || !(self.cg_tol > 0.0) {
            return bad("stop_tol, fd_eps and cg_tol must be non-negative / positive".into());
        }
        self.sched.validate()
    }
}

/// `Proj_X(x − λ g)`.
pub fn outer_step(x: &RealVector, g: &RealVector, lambda: f64, region_x: &BoxRegion) -> Result<RealVector> {
    ensure_finite(g, "hypergradient")?;
    project_box(&(x - g * lambda), region_x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    NumericalFailure,
}

/// Metrics at one outer iterate. Analytic comparisons are `None` when the
/// problem has no reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub t: usize,
    pub x: RealVector,
    pub phi_k: f64,
    pub grad_norm: f64,
    pub err_x: Option<f64>,
    pub err_y: Option<f64>,
    pub f_gap: Option<f64>,
    pub phi_gap: Option<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub problem: String,
    pub method: Method,
    pub lambda: f64,
    pub rows: Vec<RunRow>,
    pub final_x: RealVector,
    pub final_y: Option<RealVector>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }
}

/// A configured method bound to a problem: evaluates `φ_K` and its hypergradient.
pub struct Evaluator<'a> {
    problem: &'a dyn BilevelProblem,
    cfg: &'a SolverConfig,
    y0: RealVector,
}

/// `φ_K(x)`, the inner trace behind it and the hypergradient.
pub struct Evaluation {
    pub phi_k: f64,
    pub trace: InnerTrace,
    pub hypergrad: HypergradResult,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a dyn BilevelProblem, cfg: &'a SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let y0 = match &cfg.y0 {
            Some(v) => {
                let y = RealVector::from_vec(v.clone());
                require_dim("y0", &y, problem.dim_y())?;
                ensure_finite(&y, "y0")?;
                y
            }
            None => default_y0(problem.region_y()),
        };
        let so = problem.second_order();
        let needs_upper = cfg.method == Method::Bda;
        let needs_lower = cfg.method != Method::Obda;
        if (needs_lower && !so.lower) || (needs_upper && !so.upper) {
            return Err(BdaError::Capability(format!(
                "method {} needs second derivatives that {} does not provide",
                cfg.method,
                problem.name()
            )));
        }
        Ok(Evaluator { problem, cfg, y0 })
    }

    pub fn y0(&self) -> &RealVector {
        &self.y0
    }

    pub fn evaluate(&self, x: &RealVector) -> Result<Evaluation> {
        let (p, cfg) = (self.problem, self.cfg);
        let trace = run_inner(p, x, Some(&self.y0), cfg.inner_steps(), &cfg.sched, cfg.method.inner_mode())?;
        let hypergrad = match cfg.method {
            Method::Bda | Method::Rhg | Method::Trhg => reverse_from_trace(p, x, &trace, &cfg.sched, cfg.truncation())?,
            Method::Ihg => hypergrad_implicit(p, x, trace.final_y(), cfg.cg_tol, cfg.cg_max_iter)?,
            Method::Obda => hypergrad_onestage(p, x, &self.y0, &cfg.sched, cfg.fd_eps)?,
        };
        let phi_k = p.upper(x, trace.final_y());
        if !phi_k.is_finite() {
            return Err(BdaError::numerical("phi_K", "upper objective"));
        }
        Ok(Evaluation { phi_k, trace, hypergrad })
    }
}

/// Step with `λ·L̂ = 0.5`, `L̂` the largest hypergradient difference quotient
/// over a few seeded probes around `x0`.
pub fn estimate_lambda(eval: &Evaluator<'_>, region_x: &BoxRegion, x0: &RealVector, seed: u64) -> Result<f64> {
    let g0 = eval.evaluate(x0)?.hypergrad.gradient;
    let radius = 1e-2 * (1.0 + x0.norm());
    let mut rng = rng_stream(seed ^ 0x5eed_1a4b_da00_0001);
    let mut lip: f64 = 0.0;
    for _ in 0..4 {
        let dir = rng.normal_vector(x0.len());
        let probe = project_box(&(x0 + &dir * (radius / dir.norm().max(1e-300))), region_x)?;
        let dx = (&probe - x0).norm();
        if dx == 0.0 {
            continue;
        }
        let g = eval.evaluate(&probe)?.hypergrad.gradient;
        lip = lip.max((g - &g0).norm() / dx);
    }
    Ok(if lip > 0.0 { 0.5 / lip } else { 1.0 })
}

fn metrics(p: &dyn BilevelProblem, x: &RealVector, y_k: &RealVector, phi_k: f64) -> [Option<f64>; 4] {
    let err_x = p.optimum().map(|(xs, _)| (x - xs).norm());
    let err_y = p.lower_solution(x).map(|ys| (y_k - ys).norm());
    let f_gap = p.lower_optimal_value(x).map(|fs| (p.lower(x, y_k) - fs).abs());
    let phi_gap = p.value_function(x).map(|v| (phi_k - v).abs());
    [err_x, err_y, f_gap, phi_gap]
}

/// Runs the outer loop. Configuration and capability problems are errors;
/// step sizes must satisfy `s_u L_F < 1`, `s_l L_f < 1` unless the schedule
/// is in diagnostic mode.
/// a numerical failure mid-run returns the partial record with
/// [`RunStatus::NumericalFailure`].
pub fn solve(problem: &dyn BilevelProblem, cfg: &SolverConfig) -> Result<RunRecord> {
    solve_observed(problem, cfg, |_, _| {})
}

/// [`solve`], calling `observe(t, evaluation)` after every successful
/// evaluation of `φ_K` at the iterate `x_t`.
pub fn solve_observed<O>(problem: &dyn BilevelProblem, cfg: &SolverConfig, mut observe: O) -> Result<RunRecord>
where
    O: FnMut(usize, &Evaluation),
{
    let started = Instant::now();
    if cfg.sched.diagnostic {
        cfg.sched.validate()?;
    } else {
        cfg.sched.check_admissible(problem)?;
    }
    let eval = Evaluator::new(problem, cfg)?;
    let region_x = problem.region_x();
    let mut x = match &cfg.x0 {
        Some(v) => {
            let x = RealVector::from_vec(v.clone());
            require_dim("x0", &x, problem.dim_x())?;
            ensure_finite(&x, "x0")?;
            project_box(&x, region_x)?
        }
        None => project_box(&RealVector::zeros(problem.dim_x()), region_x)?,
    };
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => match estimate_lambda(&eval, region_x, &x, cfg.seed) {
            Ok(l) => l,
            Err(e @ BdaError::Numerical { .. }) | Err(e @ BdaError::Convergence { .. }) => {
                return Ok(RunRecord {
                    problem: problem.name().to_string(),
                    method: cfg.method,
                    lambda: 0.0,
                    rows: Vec::new(),
                    final_x: x,
                    final_y: None,
                    status: RunStatus::NumericalFailure,
                    error: Some(format!("step estimate: {e}")),
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                })
            }
            Err(e) => return Err(e),
        },
    };

    let mut rows = Vec::new();
    let mut final_y = None;
    let mut status = RunStatus::MaxIters;
    let mut error = None;
    for t in 0..cfg.t_max {
        let step = eval.evaluate(&x).and_then(|ev| {
            let next = outer_step(&x, &ev.hypergrad.gradient, lambda, region_x)?;
            Ok((ev, next))
        });
        let (ev, next) = match step {
            Ok(v) => v,
            Err(e @ BdaError::Numerical { .. }) | Err(e @ BdaError::Convergence { .. }) => {
                status = RunStatus::NumericalFailure;
                error = Some(format!("outer iteration {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let y_k = ev.trace.final_y().clone();
        let [err_x, err_y, f_gap, phi_gap] = metrics(problem, &x, &y_k, ev.phi_k);
        let grad_norm = ev.hypergrad.gradient.norm();
        if !grad_norm.is_finite() || [err_x, err_y, f_gap, phi_gap].iter().flatten().any(|v| !v.is_finite()) {
            status = RunStatus::NumericalFailure;
            error = Some(format!("outer iteration {t}: non-finite metric"));
            break;
        }
        observe(t, &ev);
        rows.push(RunRow {
            t,
            x: x.clone(),
            phi_k: ev.phi_k,
            grad_norm,
            err_x,
            err_y,
            f_gap,
            phi_gap,
            wall_ms: cfg.record_wall_time.then(|| started.elapsed().as_secs_f64() * 1e3),
        });
        final_y = Some(y_k);
        let moved = (&next - &x).norm();
        x = next;
        if moved <= cfg.stop_tol {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(RunRecord {
        problem: problem.name().to_string(),
        method: cfg.method,
        lambda,
        rows,
        final_x: x,
        final_y,
        status,
        error,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
