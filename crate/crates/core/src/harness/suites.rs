//! Scripted experiment suites. Each suite writes one CSV per curve and a
//! `summary.json`, and also returns the summary.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::trace::{emit_trace, write_json, RunSummary};
use crate::error::{BdaError, Result};
use crate::inner::{AggregationSchedule, AlphaRule, BetaRule, InnerMode};
use crate::numerics::{rng_stream, RealVector};
use crate::outer::{solve, Method, RunRecord, RunStatus, SolverConfig};
use crate::problems::{sigmoid, BilevelProblem, Counterexample, Hypercleaning, LlsQuadratic, Remark1};
use crate::verify::{
    check_descent_inequality, check_nonexpansive, check_rate_bound, check_rate_bound_on_trace, check_stationarity,
    compute_rate_constants, CheckReport, CheckStatus,
};

/// Runs `f` on a rayon pool whose size is capped by `BDA_THREADS`.
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("BDA_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| BdaError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| BdaError::io(out, e))
}

/// Parses a comma separated method list such as `bda,rhg`.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods =
        list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(BdaError::Config("empty method list".into()));
    }
    Ok(methods)
}

struct Job {
    name: String,
    y_half_width: Option<f64>,
    cfg: SolverConfig,
}

fn run_jobs(n: usize, jobs: Vec<Job>, out: &Path) -> Result<Vec<(String, RunRecord)>> {
    with_pool(|| {
        jobs.into_par_iter()
            .map(|job| {
                let p = Counterexample::with_regions(n, 100.0, job.y_half_width)?;
                let rec = solve(&p, &job.cfg)?;
                emit_trace(&rec, &out.join(format!("{}.csv", job.name)))?;
                Ok((job.name, rec))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitResult {
    pub index: usize,
    pub final_err_x: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub y0_value: f64,
    pub y_half_width: f64,
    pub with_projection: RunSummary,
    pub without_projection: RunSummary,
    /// The projected run converged, in no more outer iterations than the
    /// unprojected one if that converged at all.
    pub projection_not_slower: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSummary {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub methods: Vec<Method>,
    pub base_config: SolverConfig,
    pub curves: BTreeMap<String, RunSummary>,
    pub initializations: Vec<InitResult>,
    /// BDA's final error is at most a tenth of RHG's at every initialization.
    pub bda_dominates_rhg: Option<bool>,
    pub projection: ProjectionResult,
    pub alpha_sweep: BTreeMap<String, RunSummary>,
    /// `α_k = 0` ends farthest from the solution.
    pub alpha_zero_worst: bool,
    pub k_sweep: BTreeMap<String, RunSummary>,
}

pub const SWEEP_INITIALIZATIONS: usize = 10;
/// Initial points are drawn from `[−INIT_HALF_WIDTH, INIT_HALF_WIDTH]ⁿ`.
pub const INIT_HALF_WIDTH: f64 = 1.0;
/// Every coordinate of the far inner start in the projection sweep.
pub const PROJECTION_Y0: f64 = 2.0;
pub const PROJECTION_HALF_WIDTH: f64 = 1.2;
pub const PROJECTION_LAMBDA: f64 = 0.01;
pub const PROJECTION_STOP_TOL: f64 = 1e-6;
pub const PROJECTION_T_MAX: usize = 3000;

/// The counter-example comparisons: per-method curves, an initialization
/// sweep, projection on/off from a far start, an `α` rule sweep and a `K`
/// sweep. Upper steps are estimated per run, except in the projection sweep,
/// which uses a fixed step and a looser stopping tolerance.
pub fn suite_counterexample(n: usize, k: usize, methods: &[Method], out: &Path) -> Result<CounterexampleSummary> {
    if let Some(m) = methods.iter().find(|m| !matches!(m, Method::Bda | Method::Rhg | Method::Trhg)) {
        return Err(BdaError::Config(format!("method {m} is not part of the counter-example suite")));
    }
    if methods.is_empty() {
        return Err(BdaError::Config("empty method list".into()));
    }
    ensure_dir(out)?;
    let base = SolverConfig::new(Method::Bda, k, 1000, AggregationSchedule::reference());
    base.validate()?;
    let with = |method: Method| SolverConfig { method, ..base.clone() };
    let mut jobs = Vec::new();

    for &m in methods {
        jobs.push(Job { name: format!("curve_{m}"), y_half_width: None, cfg: with(m) });
    }
    for i in 0..SWEEP_INITIALIZATIONS {
        let x0 = rng_stream(1000 + i as u64).uniform_vector(n, -INIT_HALF_WIDTH, INIT_HALF_WIDTH);
        for &m in methods {
            jobs.push(Job {
                name: format!("init{i}_{m}"),
                y_half_width: None,
                cfg: SolverConfig { x0: Some(x0.as_slice().to_vec()), seed: i as u64, ..with(m) },
            });
        }
    }
    let far = SolverConfig {
        y0: Some(vec![PROJECTION_Y0; 2 * n]),
        sched: AggregationSchedule { diagnostic: true, ..base.sched },
        lambda: Some(PROJECTION_LAMBDA),
        stop_tol: PROJECTION_STOP_TOL,
        t_max: PROJECTION_T_MAX,
        ..with(Method::Bda)
    };
    jobs.push(Job { name: "proj_with".into(), y_half_width: Some(PROJECTION_HALF_WIDTH), cfg: far.clone() });
    jobs.push(Job { name: "proj_without".into(), y_half_width: None, cfg: far });
    let alphas = [
        ("zero", AlphaRule::Zero),
        ("constant_0.5", AlphaRule::Constant { a: 0.5 }),
        ("scaled_0.5", AlphaRule::Scaled { c: 0.5 }),
    ];
    for (label, alpha) in alphas {
        let sched = AggregationSchedule { alpha, diagnostic: true, ..base.sched };
        jobs.push(Job {
            name: format!("alpha_{label}"),
            y_half_width: None,
            cfg: SolverConfig { sched, ..with(Method::Bda) },
        });
    }
    let ks = [k.div_ceil(4).max(1), k.div_ceil(2).max(1), 2 * k];
    for &m in methods {
        for &kk in &ks {
            jobs.push(Job {
                name: format!("k{kk}_{m}"),
                y_half_width: None,
                cfg: SolverConfig { k: kk, truncate_at: None, ..with(m) },
            });
        }
    }

    let results: BTreeMap<String, RunRecord> = run_jobs(n, jobs, out)?.into_iter().collect();
    let summary = |name: &str| RunSummary::of(&results[name]);
    let err = |name: &str| results[name].rows.last().and_then(|r| r.err_x).unwrap_or(f64::INFINITY);

    let curves = methods.iter().map(|m| (m.to_string(), summary(&format!("curve_{m}")))).collect();
    let initializations: Vec<InitResult> = (0..SWEEP_INITIALIZATIONS)
        .map(|i| InitResult {
            index: i,
            final_err_x: methods.iter().map(|m| (m.to_string(), err(&format!("init{i}_{m}")))).collect(),
        })
        .collect();
    let bda_dominates_rhg = (methods.contains(&Method::Bda) && methods.contains(&Method::Rhg))
        .then(|| initializations.iter().all(|r| r.final_err_x["bda"] <= 0.1 * r.final_err_x["rhg"]));
    let (pw, pwo) = (&results["proj_with"], &results["proj_without"]);
    let projection = ProjectionResult {
        y0_value: PROJECTION_Y0,
        y_half_width: PROJECTION_HALF_WIDTH,
        with_projection: RunSummary::of(pw),
        without_projection: RunSummary::of(pwo),
        projection_not_slower: pw.status == RunStatus::Converged
            && (pwo.status != RunStatus::Converged || pw.iterations() <= pwo.iterations()),
    };
    let alpha_sweep: BTreeMap<String, RunSummary> =
        alphas.iter().map(|(l, _)| (l.to_string(), summary(&format!("alpha_{l}")))).collect();
    let alpha_zero_worst =
        err("alpha_zero") >= err("alpha_constant_0.5") && err("alpha_zero") >= err("alpha_scaled_0.5");
    let k_sweep = methods
        .iter()
        .flat_map(|m| ks.iter().map(move |kk| format!("k{kk}_{m}")))
        .map(|name| {
            let s = summary(&name);
            (name, s)
        })
        .collect();

    let result = CounterexampleSummary {
        n,
        k,
        methods: methods.to_vec(),
        base_config: base,
        curves,
        initializations,
        bda_dominates_rhg,
        projection,
        alpha_sweep,
        alpha_zero_worst,
        k_sweep,
    };
    write_json(&result, &out.join("summary.json"))?;
    Ok(result)
}

/// Precision, recall and F1 of `flags` against `truth`. With no positives
/// and no flags the identification is perfect and F1 is 1.
pub fn f1_score(flags: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&f, &t) in flags.iter().zip(truth) {
        match (f, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let f1 = if tp + fp + fneg == 0 { 1.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64 };
    (ratio(tp, tp + fp), ratio(tp, tp + fneg), f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub steps: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningResult {
    pub method: Method,
    /// `ok`, or the error that stopped the method.
    pub outcome: String,
    pub run: Option<RunSummary>,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub mean_weight_corrupted: Option<f64>,
    pub mean_weight_clean: Option<f64>,
    /// Reported only; never compared.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypercleanSummary {
    pub config: ExperimentConfig,
    pub baseline: BaselineResult,
    pub methods: Vec<CleaningResult>,
}

pub const BASELINE_STEPS: usize = 2000;

/// Plain gradient descent on the unweighted training loss with step `1/L_f`.
pub fn unweighted_baseline(p: &Hypercleaning, steps: usize) -> Result<RealVector> {
    let ones = vec![1.0; p.data().train.len()];
    let step = 1.0 / p.smoothness().lower_lipschitz.unwrap_or(1.0);
    let mut y = RealVector::zeros(p.dim_y());
    for _ in 0..steps {
        let (_, g) = p.weighted_loss_grad(&ones, &y);
        y = crate::numerics::project_box(&(&y - g * step), p.region_y())?;
    }
    crate::numerics::ensure_finite(&y, "baseline parameters")?;
    Ok(y)
}

fn clean_one(p: &Hypercleaning, cfg: &ExperimentConfig, method: Method, out: &Path) -> Result<CleaningResult> {
    let started = std::time::Instant::now();
    let solver = SolverConfig { method, ..cfg.solver_config(cfg.seed) };
    let mut res = CleaningResult {
        method,
        outcome: "ok".into(),
        run: None,
        val_accuracy: None,
        test_accuracy: None,
        precision: None,
        recall: None,
        f1: None,
        mean_weight_corrupted: None,
        mean_weight_clean: None,
        wall_ms: 0.0,
    };
    let rec = match solve(p, &solver) {
        Ok(r) => r,
        Err(e @ (BdaError::Config(_) | BdaError::Contract(_) | BdaError::Io { .. })) => return Err(e),
        Err(e) => {
            res.outcome = e.to_string();
            res.wall_ms = started.elapsed().as_secs_f64() * 1e3;
            return Ok(res);
        }
    };
    emit_trace(&rec, &out.join(format!("hyperclean_{method}.csv")))?;
    if let Some(e) = &rec.error {
        res.outcome = e.clone();
    }
    let data = p.data();
    let weights: Vec<f64> = rec.final_x.iter().map(|&t| sigmoid(t)).collect();
    let flags: Vec<bool> = weights.iter().map(|&w| w < 0.5).collect();
    let (prec, rec_, f1) = f1_score(&flags, &data.corrupted);
    let mean_where = |want: bool| {
        let sel: Vec<f64> = weights.iter().zip(&data.corrupted).filter(|(_, &c)| c == want).map(|(w, _)| *w).collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    };
    res.precision = Some(prec);
    res.recall = Some(rec_);
    res.f1 = Some(f1);
    res.mean_weight_corrupted = mean_where(true);
    res.mean_weight_clean = mean_where(false);
    if let Some(y) = &rec.final_y {
        res.val_accuracy = Some(p.accuracy(y, &data.val));
        res.test_accuracy = Some(p.accuracy(y, &data.test));
    }
    res.run = Some(RunSummary::of(&rec));
    res.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(res)
}

/// Data hyper-cleaning: the unweighted baseline plus, per method, accuracy,
/// corruption-flag F1 (`σ(x_i) < 0.5` flags sample `i`) and wall time. A
/// method that cannot run on the problem is recorded with its error.
pub fn suite_hyperclean(cfg: &ExperimentConfig, methods: &[Method], out: &Path) -> Result<HypercleanSummary> {
    let crate::harness::config::ProblemSpec::Hyperclean(hc) = &cfg.problem else {
        return Err(BdaError::Config("hyperclean suite needs a hyperclean problem".into()));
    };
    if methods.is_empty() {
        return Err(BdaError::Config("empty method list".into()));
    }
    ensure_dir(out)?;
    let p = Hypercleaning::new(hc)?;
    p.data().write_csv(&out.join("dataset.csv"))?;
    let y_base = unweighted_baseline(&p, BASELINE_STEPS)?;
    let baseline = BaselineResult {
        steps: BASELINE_STEPS,
        val_accuracy: p.accuracy(&y_base, &p.data().val),
        test_accuracy: p.accuracy(&y_base, &p.data().test),
    };
    let results = with_pool(|| methods.par_iter().map(|&m| clean_one(&p, cfg, m, out)).collect::<Result<Vec<_>>>())??;
    let summary = HypercleanSummary { config: cfg.clone(), baseline, methods: results };
    write_json(&summary, &out.join("summary.json"))?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifySuite {
    Lemma1,
    Rate,
    Stationarity,
    All,
}

impl std::str::FromStr for VerifySuite {
    type Err = BdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemma1" => Ok(VerifySuite::Lemma1),
            "rate" => Ok(VerifySuite::Rate),
            "stationarity" => Ok(VerifySuite::Stationarity),
            "all" => Ok(VerifySuite::All),
            other => Err(BdaError::Config(format!("unknown verify suite `{other}`"))),
        }
    }
}

/// One audit inside a verify suite. `expected` is the status that counts as
/// success; negative controls expect a failure or a hypothesis breach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub expected: CheckStatus,
    pub ok: bool,
    pub report: CheckReport,
}

fn expect(name: &str, expected: CheckStatus, report: CheckReport) -> SuiteCheck {
    SuiteCheck { name: name.into(), expected, ok: report.status == expected, report }
}

fn audit_schedule(s_l: f64) -> AggregationSchedule {
    AggregationSchedule {
        mu: 0.3,
        s_u: 0.5,
        s_l,
        alpha: AlphaRule::Harmonic,
        beta: BetaRule::Declining { start: 1.0, lower: 0.5 },
        diagnostic: false,
    }
}

fn lemma1_checks() -> Result<Vec<SuiteCheck>> {
    let lls = LlsQuadratic::random(3, 4, 11)?;
    let remark = Remark1::new();
    let mut checks = Vec::new();
    let cases: [(&str, &dyn BilevelProblem, RealVector); 2] = [
        ("lls_quadratic", &lls, RealVector::from_vec(vec![0.5, -0.2, 0.9])),
        ("remark1", &remark, RealVector::from_vec(vec![1.0])),
    ];
    for (name, p, x) in cases {
        let l_f = p.smoothness().lower_lipschitz.unwrap_or(1.0);
        let good = audit_schedule(0.9 / l_f);
        let tr = crate::inner::run_inner(p, &x, None, 50, &good, InnerMode::Bda)?;
        checks.push(expect(
            &format!("descent_{name}"),
            CheckStatus::Pass,
            check_descent_inequality(p, &x, &tr, &good, 100, 7)?,
        ));
        checks.push(expect(&format!("nonexpansive_{name}"), CheckStatus::Pass, check_nonexpansive(p, &x, &tr)?));
        let bad = audit_schedule(2.0 / l_f);
        let tr = crate::inner::run_inner(p, &x, None, 10, &bad, InnerMode::Bda)?;
        checks.push(expect(
            &format!("descent_{name}_oversized_step"),
            CheckStatus::HypothesisBreach,
            check_descent_inequality(p, &x, &tr, &bad, 100, 7)?,
        ));
    }
    let ce = Counterexample::new(5)?;
    let x = RealVector::from_vec(vec![0.3, -1.0, 2.0, 0.5, 1.5]);
    let tr = crate::inner::run_inner(&ce, &x, None, 200, &AggregationSchedule::reference(), InnerMode::Bda)?;
    checks.push(expect("nonexpansive_counterexample", CheckStatus::Pass, check_nonexpansive(&ce, &x, &tr)?));
    Ok(checks)
}

/// Schedule and problem used by the rate audit: a compact counter-example
/// with `α_k = 1/(k+1)`.
pub fn rate_setup() -> Result<(Counterexample, RealVector, AggregationSchedule)> {
    let p = Counterexample::with_regions(5, 1.0, Some(2.0))?;
    let sched = AggregationSchedule {
        mu: 0.5,
        s_u: 1.0 / 2160.0,
        s_l: 0.5,
        alpha: AlphaRule::Harmonic,
        beta: BetaRule::Constant { b: 1.0 },
        diagnostic: false,
    };
    Ok((p, RealVector::from_element(5, 0.5), sched))
}

pub const RATE_K_MAX: usize = 500;
/// Factor applied to the numerator constants in the negative control.
pub const RATE_CORRUPTION: f64 = 1e-6;

fn rate_checks() -> Result<Vec<SuiteCheck>> {
    let (p, x, sched) = rate_setup()?;
    let good = check_rate_bound(&p, &x, &sched, RATE_K_MAX)?;
    let constants = compute_rate_constants(&p, &x, &sched, 256, 0)?.scaled(RATE_CORRUPTION);
    let tr = crate::inner::run_inner(&p, &x, None, RATE_K_MAX + 1, &sched, InnerMode::Bda)?;
    let bad = check_rate_bound_on_trace(&p, &x, &tr, &constants, RATE_K_MAX)?;
    Ok(vec![
        expect("rate_bound", CheckStatus::Pass, good),
        expect("rate_bound_corrupted_constants", CheckStatus::Fail, bad),
    ])
}

/// Problem, grid and schedule used by the stationarity audit.
pub fn stationarity_setup() -> Result<(LlsQuadratic, Vec<RealVector>, AggregationSchedule)> {
    let p = LlsQuadratic::random(2, 3, 5)?;
    let grid = (0..11)
        .map(|i| {
            let t = -1.0 + 0.2 * i as f64;
            RealVector::from_vec(vec![t, -0.5 * t])
        })
        .collect();
    let l_f = p.smoothness().lower_lipschitz.unwrap_or(1.0);
    let sched = AggregationSchedule {
        mu: 0.01,
        s_u: 0.5,
        s_l: 0.5 / l_f,
        alpha: AlphaRule::Harmonic,
        beta: BetaRule::Constant { b: 1.0 },
        diagnostic: false,
    };
    Ok((p, grid, sched))
}

fn stationarity_checks() -> Result<Vec<SuiteCheck>> {
    let (p, grid, sched) = stationarity_setup()?;
    let rep = check_stationarity(&p, &grid, &sched, &[10, 1000])?;
    let mut report = CheckReport::new("stationarity");
    let (e10, e1000) = (rep.sup_errors[0], rep.sup_errors[1]);
    report.observe(1e-3 - e1000, 0.0, || "k = 1000 against 1e-3".into());
    report.observe(e10 - e1000, 0.0, || "k = 1000 against k = 10".into());
    report.notes.push(format!("sup error at k = 10: {e10:e}; at k = 1000: {e1000:e}"));
    Ok(vec![expect("stationarity", CheckStatus::Pass, report)])
}

/// Runs the named audits and writes `verify.json`.
pub fn suite_verify(suite: VerifySuite, out: &Path) -> Result<Vec<SuiteCheck>> {
    ensure_dir(out)?;
    let mut checks = Vec::new();
    if matches!(suite, VerifySuite::Lemma1 | VerifySuite::All) {
        checks.extend(lemma1_checks()?);
    }
    if matches!(suite, VerifySuite::Rate | VerifySuite::All) {
        checks.extend(rate_checks()?);
    }
    if matches!(suite, VerifySuite::Stationarity | VerifySuite::All) {
        checks.extend(stationarity_checks()?);
    }
    write_json(&checks, &out.join("verify.json"))?;
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[true, false, true], &[true, false, true]).2, 1.0);
        assert_eq!(f1_score(&[false; 4], &[false; 4]).2, 1.0);
        assert_eq!(f1_score(&[false, false], &[true, true]).2, 0.0);
        let (p, r, f) = f1_score(&[true, true, false, false], &[true, false, true, false]);
        assert_eq!((p, r, f), (0.5, 0.5, 0.5));
    }

    #[test]
    fn method_lists() {
        assert_eq!(parse_methods("bda, rhg").unwrap(), vec![Method::Bda, Method::Rhg]);
        assert!(parse_methods("bda,sgd").is_err());
        assert!(parse_methods("").is_err());
    }

    #[test]
    fn counterexample_suite_rejects_other_methods() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(suite_counterexample(2, 5, &[Method::Ihg], dir.path()), Err(BdaError::Config(_))));
    }
}
