use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The rotation angle is too close to π for a unique logarithm.
    #[error("ambiguous rotation: angle {angle} rad is within 1e-6 of pi")]
    AmbiguousRotation { angle: f64 },

    #[error("point behind camera (depth {depth} m)")]
    BehindCamera { depth: f64 },

    #[error("distance tensor needs at least one segment")]
    NoSegments,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// The projection ray is (numerically) parallel to the target plane.
    #[error("ray parallel to plane (|n.f| = {dot})")]
    ParallelRay { dot: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
