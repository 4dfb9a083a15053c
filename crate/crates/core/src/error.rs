use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments or configuration supplied by the caller.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("index {index} out of range for {n} objects")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("degenerate comparison ({i},{j},{l},{k}): a side compares an object with itself")]
    DegenerateComparison { i: usize, j: usize, l: usize, k: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Consecutive outer iterates coincide, so the BB quotient is undefined.
    #[error("degenerate step: consecutive outer iterates are identical")]
    DegenerateStep,

    #[error("unstable step size: zero curvature denominator; set epsilon > 0")]
    UnstableStep,

    #[error("divergence at epoch {epoch}: non-finite iterate")]
    Divergence { epoch: usize },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// True for failures caused by numerics rather than by the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::DegenerateStep | Error::UnstableStep | Error::Divergence { .. }
        )
    }
}
