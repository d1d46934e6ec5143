use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// State magnitude left the representable range during simulation.
    #[error("state overflow at step {step}: |x| entry {magnitude:e} exceeds {limit:e}")]
    Instability {
        step: usize,
        magnitude: f64,
        limit: f64,
    },

    /// Too many Monte Carlo runs diverged for the experiment to be meaningful.
    #[error(
        "{diverged} of {runs} runs diverged (assumption-2 margin {margin:.6}, mss radius {mss_radius:.6})"
    )]
    UnstableExperiment {
        diverged: usize,
        runs: usize,
        margin: f64,
        mss_radius: f64,
    },

    /// Not enough data for a quantity to be defined yet (no visits, singular
    /// covariance).
    #[error("not yet identifiable: {0}")]
    NotIdentifiable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 validation, 2 instability, 3 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Instability { .. } | Error::UnstableExperiment { .. } => 2,
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}
