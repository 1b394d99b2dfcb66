use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, ranges, symmetry).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{0} has non-finite entries")]
    NonFinite(String),

    #[error("{op} did not converge on a {rows}x{cols} matrix")]
    NumericFailure {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("matrix is singular: eigenvalue {eigenvalue:e} is below 1e-12; {hint}")]
    Singular { eigenvalue: f64, hint: &'static str },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("noise sampling failed: {0}")]
    Sampling(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

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
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
