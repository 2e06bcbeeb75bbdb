//! Library-wide error type.

use thiserror::Error;

/// Errors produced by mesh handling, assembly, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A mesh file or mesh definition failed validation.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Dimension or index mismatch between coupled inputs.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A queried point lies outside the meshed domain.
    #[error("point ({0}, {1}) lies outside the meshed domain")]
    PointOutsideDomain(f64, f64),

    /// The linear system could not be factorized or solved to tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// I/O failure while reading or writing an artifact.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
