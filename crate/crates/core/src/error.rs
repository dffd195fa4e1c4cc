use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum BdaError {
    /// A precondition on the inputs was not met (dimension mismatch, bad parameter).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite value appeared during evaluation.
    #[error("numerical failure in {what} at {location}")]
    Numerical { what: String, location: String },

    /// The problem does not supply something the requested method needs.
    #[error("missing capability: {0}")]
    Capability(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// The finite-difference offset collapsed in floating point.
    #[error("finite-difference step {eps:e} is too small: probe points coincide")]
    DegenerateEpsilon { eps: f64 },

    /// Invalid experiment configuration.
    #[error("bad config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BdaError {
    pub(crate) fn numerical(what: impl Into<String>, location: impl Into<String>) -> Self {
        BdaError::Numerical { what: what.into(), location: location.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BdaError::Io { path: path.into(), source }
    }

    /// Short machine-readable tag used by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            BdaError::Contract(_) => "contract",
            BdaError::Numerical { .. } => "numerical",
            BdaError::Capability(_) => "capability",
            BdaError::Convergence { .. } => "convergence",
            BdaError::DegenerateEpsilon { .. } => "degenerate_epsilon",
            BdaError::Config(_) => "config",
            BdaError::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = BdaError> = std::result::Result<T, E>;
