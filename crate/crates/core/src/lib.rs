//! Bi-level descent aggregation.
//!
//! Solves `min_{x∈X} F(x, y)` subject to `y ∈ argmin_{y∈Y} f(x, y)` without
//! assuming the lower-level solution is unique. The inner loop mixes the
//! upper- and lower-level descent directions; the outer loop follows the
//! hypergradient of the unrolled upper objective.
//!
//! * [`problems`]: the problem contract and built-in instances.
//! * [`inner`]: the aggregated lower-level step and its schedules.
//! * [`hypergrad`]: reverse, forward, implicit and one-stage estimators.
//! * [`outer`]: the upper-level solver.
//! * [`verify`]: independent oracles and inequality audits.
//! * [`harness`]: configs, CSV/JSON output, experiment suites and the CLI.

// `!(v > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod hypergrad;
pub mod inner;
pub mod numerics;
pub mod outer;
pub mod problems;
pub mod verify;

pub use error::{BdaError, Result};
pub use inner::{AggregationSchedule, AlphaRule, BetaRule, InnerMode, InnerTrace};
pub use numerics::{project_box, rng_stream, BoxRegion, RealMatrix, RealVector};
pub use outer::{solve, Method, RunRecord, RunStatus, SolverConfig};
pub use problems::BilevelProblem;
