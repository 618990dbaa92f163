use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("grid error at row {row}, column {col}: {message}")]
    Grid {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("calibration failed for band {band}: {message}")]
    Calibration { band: String, message: String },

    #[error("{context}: {source}")]
    Cell {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches the sweep cell (or other context) the error came from.
    pub fn in_cell(self, context: impl Into<String>) -> Self {
        Error::Cell {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
