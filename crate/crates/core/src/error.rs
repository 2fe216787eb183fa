use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A Jacobian diagonal factor was not strictly positive. Only reachable if
    /// the effective-scale invariant has been bypassed.
    #[error("non-positive log-det argument {value} at dimension {index}")]
    InvariantViolation { index: usize, value: f64 },

    #[error("inverse did not converge at dimension {index} after {iterations} iterations")]
    NoConvergence { index: usize, iterations: usize },

    #[error("{0} layers have no inverse")]
    NotInvertible(&'static str),

    #[error("inverse/forward consistency check failed: error {error:e} exceeds {tolerance:e}")]
    Inconsistent { error: f64, tolerance: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
