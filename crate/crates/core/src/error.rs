use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// A numeric argument is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Two rasters or vectors that must agree in size do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The conjugate gradient solve stopped before reaching its tolerance.
    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// A training or evaluation set lacks one of the two classes.
    #[error("degenerate labels: {0}")]
    Degenerate(String),

    #[error("malformed {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
