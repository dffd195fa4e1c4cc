//! Independent oracles and inequality audits.
//!
//! Nothing here calls the estimator it is used to check: the finite-difference
//! and grid oracles only evaluate scalar maps, and the audits read inner traces
//! and recompute every term from the problem definition.

mod audits;
mod oracles;
mod rate;

pub use audits::{check_descent_inequality, check_nonexpansive, check_stationarity, descent_slack, StationarityReport};
pub use oracles::{fd_gradient, grid_argmin, reduced_bound_minimum, rhg_limit_oracle_counterexample, RhgLimit};
pub use rate::{check_rate_bound, check_rate_bound_on_trace, compute_rate_constants, RateConstants};

use serde::{Deserialize, Serialize};

/// Every tolerance used by the audits, in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed negative slack in the descent inequality.
    pub descent_slack: f64,
    /// Allowed growth of the distance to a lower-level solution.
    pub nonexpansive_slack: f64,
    /// Relative error accepted between an estimator and finite differences.
    pub fd_relative: f64,
    /// Inflation applied to sampled suprema.
    pub sup_inflation: f64,
    /// Residual accepted from the scalar root finder.
    pub root_residual: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    descent_slack: 1e-9,
    nonexpansive_slack: 1e-10,
    fd_relative: 1e-5,
    sup_inflation: 0.05,
    root_residual: 1e-12,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The configuration does not satisfy the hypotheses of the checked result.
    HypothesisBreach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub margin: f64,
}

/// Outcome of one audit. `worst_margin` is the smallest (most negative)
/// margin found; `location` says where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub status: CheckStatus,
    pub worst_margin: f64,
    pub location: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub(crate) fn new(name: &str) -> Self {
        CheckReport {
            check_name: name.to_string(),
            status: CheckStatus::Pass,
            worst_margin: f64::INFINITY,
            location: String::new(),
            violations: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Records a margin; negative margins below `-tol` are violations.
    pub(crate) fn observe(&mut self, margin: f64, tol: f64, location: impl FnOnce() -> String) {
        let bad = !(margin >= -tol);
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
            self.location = location();
            if bad {
                self.violations.push(Violation { location: self.location.clone(), margin });
            }
        } else if bad {
            self.violations.push(Violation { location: location(), margin });
        }
        if bad && self.status == CheckStatus::Pass {
            self.status = CheckStatus::Fail;
        }
    }

    pub(crate) fn breach(&mut self, note: String) {
        self.status = CheckStatus::HypothesisBreach;
        self.notes.push(note);
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}
