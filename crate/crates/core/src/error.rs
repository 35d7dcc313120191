use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("empty-archive: no parseable records under {0}")]
    EmptyArchive(PathBuf),

    #[error("schema error: missing required column `{column}` in {path}")]
    Schema { path: PathBuf, column: String },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance of state {state} is not positive definite")]
    NotPositiveDefinite { state: usize },

    #[error("covariance is not positive definite")]
    CovarianceNotPd,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model document: {0}")]
    Document(String),

    #[error("division-domain error: actual value is zero at indices {0:?}")]
    ZeroActual(Vec<usize>),

    #[error("no evaluable forecasts")]
    NoEvaluableForecasts,

    #[error("model file {0} not found; run `hmm-forecast train` first")]
    MissingModel(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Io { .. }
            | Error::Format { .. }
            | Error::EmptyArchive(_)
            | Error::Schema { .. }
            | Error::InsufficientData { .. }
            | Error::Document(_)
            | Error::ZeroActual(_)
            | Error::NoEvaluableForecasts
            | Error::MissingModel(_) => 3,
            Error::NotPositiveDefinite { .. } | Error::CovarianceNotPd | Error::InvalidModel(_) => 4,
        }
    }
}
