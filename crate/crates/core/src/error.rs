use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the image formation, restoration and scoring routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("gradient descent failed: {reason} (after {} iterations)", .trace.len().saturating_sub(1))]
    DescentFailure { reason: String, trace: Vec<f64> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {message}")]
    Codec { path: PathBuf, message: String },

    #[error("unsupported format in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(expected: (usize, usize), actual: (usize, usize)) -> Error {
    Error::Shape {
        expected: format!("{}x{}", expected.0, expected.1),
        actual: format!("{}x{}", actual.0, actual.1),
    }
}
