//! Experiment plumbing: configs, CSV traces, suites and the CLI.

pub mod cli;
pub mod config;
pub mod suites;
pub mod trace;

use std::io::Write;
use std::path::Path;

use crate::error::{BdaError, Result};

pub use cli::{
    cli_main, exit_code, gradcheck, run, GradcheckReport, RunOutput, SeedRun, EXIT_CHECK_FAILED, EXIT_CONFIG,
    EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE,
};
pub use config::{ExperimentConfig, ProblemSpec, Verbosity};
pub use suites::{suite_counterexample, suite_hyperclean, suite_verify, VerifySuite};
pub use trace::{emit_trace, parse_trace, read_trace, RunSummary, TraceRow};

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| BdaError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| BdaError::io(path, e))?;
    tmp.persist(path).map_err(|e| BdaError::io(path, e.error))?;
    Ok(())
}
