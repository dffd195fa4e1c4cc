//! Experiment configuration files.

use serde::{Deserialize, Serialize};

use crate::error::{BdaError, Result};
use crate::inner::{AggregationSchedule, AlphaRule, BetaRule};
use crate::outer::{Method, SolverConfig};
use crate::problems::{BilevelProblem, Counterexample, HypercleanConfig, Hypercleaning, LlsQuadratic, Remark1};

/// A built-in problem and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Counterexample {
        n: usize,
        #[serde(default)]
        x_half_width: Option<f64>,
        #[serde(default)]
        y_half_width: Option<f64>,
    },
    Remark1 {
        #[serde(default)]
        lower_reg: f64,
    },
    LlsQuadratic {
        n: usize,
        m: usize,
        #[serde(default)]
        seed: u64,
    },
    Hyperclean(HypercleanConfig),
}

impl ProblemSpec {
    /// Default parameters for a bare problem name.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "counterexample" => ProblemSpec::Counterexample { n: 50, x_half_width: None, y_half_width: None },
            "remark1" => ProblemSpec::Remark1 { lower_reg: 0.0 },
            "lls_quadratic" => ProblemSpec::LlsQuadratic { n: 2, m: 3, seed: 0 },
            "hyperclean" => ProblemSpec::Hyperclean(HypercleanConfig::default()),
            other => return Err(BdaError::Config(format!("unknown problem `{other}`"))),
        })
    }

    pub fn build(&self) -> Result<Box<dyn BilevelProblem>> {
        Ok(match self {
            ProblemSpec::Counterexample { n, x_half_width, y_half_width } => {
                Box::new(Counterexample::with_regions(*n, x_half_width.unwrap_or(100.0), *y_half_width)?)
            }
            ProblemSpec::Remark1 { lower_reg } => Box::new(Remark1::with_lower_regularization(*lower_reg)?),
            ProblemSpec::LlsQuadratic { n, m, seed } => Box::new(LlsQuadratic::random(*n, *m, *seed)?),
            ProblemSpec::Hyperclean(cfg) => Box::new(Hypercleaning::new(cfg)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ProblemField {
    Name(String),
    Spec(ProblemSpec),
}

fn problem_field<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<ProblemSpec, D::Error> {
    match ProblemField::deserialize(d)? {
        ProblemField::Name(n) => ProblemSpec::from_name(&n).map_err(serde::de::Error::custom),
        ProblemField::Spec(s) => Ok(s),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RuleField<R> {
    Number(f64),
    Text(String),
    Full(R),
}

/// Parses `"harmonic"`, `"zero"`, `"<c>/k"` or a bare number (constant).
pub fn parse_alpha_rule(text: &str) -> Result<AlphaRule> {
    let t = text.trim();
    let rule = match t {
        "harmonic" | "1/k" => AlphaRule::Harmonic,
        "zero" | "0" => AlphaRule::Zero,
        _ => {
            if let Some(c) = t.strip_suffix("/k") {
                let c: f64 = c.trim().parse().map_err(|_| BdaError::Config(format!("bad alpha_rule `{t}`")))?;
                AlphaRule::Scaled { c }
            } else {
                let a: f64 = t.parse().map_err(|_| BdaError::Config(format!("bad alpha_rule `{t}`")))?;
                AlphaRule::Constant { a }
            }
        }
    };
    Ok(rule)
}

fn alpha_field<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<AlphaRule, D::Error> {
    match RuleField::<AlphaRule>::deserialize(d)? {
        RuleField::Number(0.0) => Ok(AlphaRule::Zero),
        RuleField::Number(a) => Ok(AlphaRule::Constant { a }),
        RuleField::Text(t) => parse_alpha_rule(&t).map_err(serde::de::Error::custom),
        RuleField::Full(r) => Ok(r),
    }
}

fn beta_field<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BetaRule, D::Error> {
    match RuleField::<BetaRule>::deserialize(d)? {
        RuleField::Number(b) => Ok(BetaRule::Constant { b }),
        RuleField::Text(t) => t
            .trim()
            .parse()
            .map(|b| BetaRule::Constant { b })
            .map_err(|_| serde::de::Error::custom(format!("bad beta_rule `{t}`"))),
        RuleField::Full(r) => Ok(r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verbosity {
    #[default]
    Summary,
    Full,
}

fn d_method() -> Method {
    Method::Bda
}
fn d_mu() -> f64 {
    0.1
}
fn d_step() -> f64 {
    0.1
}
fn d_alpha() -> AlphaRule {
    AlphaRule::Scaled { c: 0.5 }
}
fn d_beta() -> BetaRule {
    BetaRule::Constant { b: 1.0 }
}
fn d_stop() -> f64 {
    1e-8
}
fn d_fd() -> f64 {
    1e-4
}
fn d_cg_tol() -> f64 {
    1e-10
}
fn d_cg_iter() -> usize {
    1000
}

/// The `run` config file. Every optional key is filled in on load, so
/// re-serializing gives the fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "problem_field")]
    pub problem: ProblemSpec,
    #[serde(default = "d_method")]
    pub method: Method,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub truncate_at: Option<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "d_mu")]
    pub mu: f64,
    #[serde(default = "d_step")]
    pub su: f64,
    #[serde(default = "d_step")]
    pub sl: f64,
    #[serde(default = "d_alpha", deserialize_with = "alpha_field")]
    pub alpha_rule: AlphaRule,
    #[serde(default = "d_beta", deserialize_with = "beta_field")]
    pub beta_rule: BetaRule,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    #[serde(default = "d_stop")]
    pub stop_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    #[serde(default = "d_fd")]
    pub fd_eps: f64,
    #[serde(default = "d_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "d_cg_iter")]
    pub cg_max_iter: usize,
    #[serde(default)]
    pub diagnostic: bool,
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub verbosity: Verbosity,
    /// Repeat the run once per seed; empty means a single run with `seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BdaError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BdaError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn schedule(&self) -> AggregationSchedule {
        AggregationSchedule {
            mu: self.mu,
            s_u: self.su,
            s_l: self.sl,
            alpha: self.alpha_rule,
            beta: self.beta_rule,
            diagnostic: self.diagnostic,
        }
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            method: self.method,
            k: self.k,
            truncate_at: self.truncate_at,
            lambda: self.lambda,
            t_max: self.t_max,
            stop_tol: self.stop_tol,
            sched: self.schedule(),
            seed,
            x0: self.x0.clone(),
            y0: self.y0.clone(),
            fd_eps: self.fd_eps,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            record_wall_time: self.record_wall_time,
        }
    }
}
