use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the CPM library.
#[derive(Debug, Error)]
pub enum CpmError {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("optimization diverged at iteration {iteration}: objective is {value}")]
    Diverged { iteration: usize, value: f64 },
}

impl CpmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CpmError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is numerical (as opposed to bad input or a broken contract).
    pub fn is_numerical(&self) -> bool {
        matches!(self, CpmError::Numerical(_) | CpmError::Diverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, CpmError>;
