use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Feller condition violated for {label}: 2*a*theta = {lhs:.6e} <= sigma^2 = {rhs:.6e}")]
    Feller { label: String, lhs: f64, rhs: f64 },

    #[error("correlation error: {0}")]
    Correlation(String),

    #[error("non-finite value for factor {factor} at path {path}, date index {date}")]
    NonFinite {
        factor: String,
        path: usize,
        date: usize,
    },

    #[error("scenario cube mismatch: {0}")]
    CubeMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
