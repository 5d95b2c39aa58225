use std::path::PathBuf;

use thiserror::Error;

use crate::linalg::SolverReport;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh validation failed: {0}")]
    Validation(String),

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("singular matrix (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("numerical breakdown in {solver} at iteration {iteration}")]
    Breakdown { solver: &'static str, iteration: usize },

    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },

    #[error("linear solve failed at step {step}: {message} ({report:?})")]
    StepSolve { step: usize, message: String, report: SolverReport },

    #[error("direct solver failure: {0}")]
    Direct(String),

    #[error("{0}")]
    Undefined(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
