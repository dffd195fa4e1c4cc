//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ProblemSpec, Verbosity};
use super::suites::{parse_methods, suite_counterexample, suite_hyperclean, suite_verify, with_pool, VerifySuite};
use super::trace::{emit_trace, write_json, InnerTraceWriter, RunSummary};
use crate::error::{BdaError, Result};
use crate::inner::AggregationSchedule;
use crate::numerics::{project_box, RealVector};
use crate::outer::{solve_observed, Evaluator, Method, RunStatus, SolverConfig};
use crate::verify::{fd_gradient, TOLERANCES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "bda", version, about = "Bi-level descent aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one configured problem and write trace CSVs and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare a method's hypergradient with finite differences of its own φ_K.
    Gradcheck {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        method: String,
        #[arg(long = "K", default_value_t = 20)]
        k: usize,
    },
    /// Counter-example comparison suite.
    Counterexample {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long = "K", default_value_t = 20)]
        k: usize,
        #[arg(long, default_value = "bda,rhg,trhg")]
        methods: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Data hyper-cleaning suite.
    Hyperclean {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "bda,obda,rhg,trhg,ihg")]
        methods: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Numerical audits of the convergence results.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code for an error that stopped a command.
pub fn exit_code(e: &BdaError) -> i32 {
    match e {
        BdaError::Numerical { .. } | BdaError::Convergence { .. } | BdaError::DegenerateEpsilon { .. } => {
            EXIT_NUMERICAL
        }
        _ => EXIT_CONFIG,
    }
}

fn report_error(e: &BdaError) {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    eprintln!("error kind={} message={msg:?}", e.kind());
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            eprintln!("error kind=usage message={line:?}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run { config, out } => {
            let output = run(&ExperimentConfig::load(&config)?, &out)?;
            for r in &output.runs {
                println!(
                    "run seed={} status={:?} iterations={} trace={}",
                    r.seed,
                    r.summary.status,
                    r.summary.iterations,
                    out.join(&r.trace).display()
                );
            }
            match output.runs.iter().find(|r| r.summary.status == RunStatus::NumericalFailure) {
                Some(r) => {
                    let msg = format!("seed {}: {}", r.seed, r.summary.error.as_deref().unwrap_or("numerical failure"));
                    eprintln!("error kind=numerical message={msg:?}");
                    Ok(EXIT_NUMERICAL)
                }
                None => Ok(EXIT_OK),
            }
        }
        Command::Gradcheck { problem, method, k } => {
            let spec = ProblemSpec::from_name(&problem)?;
            let report = gradcheck(&spec, method.parse()?, k)?;
            println!(
                "gradcheck problem={problem} method={method} K={k} max_rel_error={:.3e} tol={:.0e} {}",
                report.max_rel_error,
                TOLERANCES.fd_relative,
                if report.passed { "PASS" } else { "FAIL" }
            );
            Ok(if report.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Counterexample { n, k, methods, out } => {
            let s = suite_counterexample(n, k, &parse_methods(&methods)?, &out)?;
            println!("counterexample n={n} K={k} curves={} out={}", s.curves.len(), out.display());
            for (m, r) in &s.curves {
                println!("  {m}: status={:?} iterations={} err_x={:?}", r.status, r.iterations, r.final_err_x);
            }
            Ok(EXIT_OK)
        }
        Command::Hyperclean { config, methods, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = suite_hyperclean(&cfg, &parse_methods(&methods)?, &out)?;
            println!("baseline val_acc={:.4} test_acc={:.4}", s.baseline.val_accuracy, s.baseline.test_accuracy);
            for r in &s.methods {
                println!(
                    "  {}: outcome={:?} val_acc={:?} test_acc={:?} f1={:?} wall_ms={:.1}",
                    r.method, r.outcome, r.val_accuracy, r.test_accuracy, r.f1, r.wall_ms
                );
            }
            Ok(EXIT_OK)
        }
        Command::Verify { suite, out } => {
            let checks = suite_verify(suite.parse::<VerifySuite>()?, &out)?;
            for c in &checks {
                println!(
                    "{} {} status={:?} worst_margin={:e}",
                    if c.ok { "PASS" } else { "FAIL" },
                    c.name,
                    c.report.status,
                    c.report.worst_margin
                );
            }
            Ok(if checks.iter().all(|c| c.ok) { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub trace: String,
    #[serde(default)]
    pub inner_trace: Option<String>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
}

/// The `run` command: one solve per seed, in parallel, each writing its own
/// files under `out`, then `summary.json` with the resolved config. A run
/// that failed numerically is reported in its summary, not as an error.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput> {
    std::fs::create_dir_all(out).map_err(|e| BdaError::io(out, e))?;
    let seeds = if cfg.seeds.is_empty() { vec![cfg.seed] } else { cfg.seeds.clone() };
    let single = seeds.len() == 1;
    let runs = with_pool(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let problem = cfg.problem.build()?;
                let solver = cfg.solver_config(seed);
                let mut inner = (cfg.verbosity == Verbosity::Full).then(InnerTraceWriter::new);
                let rec = solve_observed(problem.as_ref(), &solver, |t, ev| {
                    if let Some(w) = inner.as_mut() {
                        w.push(t, ev);
                    }
                })?;
                let suffix = if single { String::new() } else { format!("_seed{seed}") };
                let trace = format!("trace{suffix}.csv");
                emit_trace(&rec, &out.join(&trace))?;
                let inner_trace = match inner {
                    Some(w) => {
                        let name = format!("inner_trace{suffix}.csv");
                        w.write(&out.join(&name))?;
                        Some(name)
                    }
                    None => None,
                };
                Ok(SeedRun { seed, trace, inner_trace, summary: RunSummary::of(&rec) })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let output = RunOutput { config: cfg.clone(), runs };
    write_json(&output, &out.join("summary.json"))?;
    Ok(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Finite-difference step for gradcheck.
pub const GRADCHECK_EPS: f64 = 1e-5;

/// The method's hypergradient at a fixed interior point against central
/// differences of the same method's `φ_K`.
pub fn gradcheck(spec: &ProblemSpec, method: Method, k: usize) -> Result<GradcheckReport> {
    let problem = spec.build()?;
    let p = problem.as_ref();
    let cfg = SolverConfig::new(method, k, 1, AggregationSchedule::reference());
    cfg.sched.check_admissible(p)?;
    let eval = Evaluator::new(p, &cfg)?;
    let x = project_box(&RealVector::from_element(p.dim_x(), 0.7), p.region_x())?;
    let g = eval.evaluate(&x)?.hypergrad.gradient;
    let fd = fd_gradient(|z| eval.evaluate(z).map(|e| e.phi_k).unwrap_or(f64::NAN), &x, GRADCHECK_EPS)?;
    let scale = fd.amax().max(1e-12);
    let max_rel_error = (&g - &fd).amax() / scale;
    Ok(GradcheckReport { max_rel_error, passed: max_rel_error <= TOLERANCES.fd_relative })
}
