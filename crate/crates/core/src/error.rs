use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("solver did not converge after {halvings} step halvings (last relative change {estimate:e})")]
    Convergence { halvings: usize, estimate: f64 },

    #[error("instability detected: {0}")]
    Instability(String),

    #[error("spectrum aliasing: {0}")]
    Aliasing(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("data inconsistent: {0}")]
    DataInconsistent(String),

    #[error("fit failure: {0}")]
    FitFailure(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("nothing to fit: {0}")]
    NothingToFit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. } | Error::Instability(_) => 4,
            Error::DegenerateFit(_) | Error::DataInconsistent(_) | Error::FitFailure(_) | Error::NothingToFit(_) => 3,
            _ => 2,
        }
    }
}
