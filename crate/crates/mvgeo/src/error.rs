//! Error type shared by all library operations.

use thiserror::Error;

/// Errors produced by geometry, loss, evaluation and I/O operations.
#[derive(Debug, Error)]
pub enum GeomError {
    #[error("depth must be strictly positive")]
    NonPositiveDepth,
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("rotation angle within tolerance of pi; log map is ambiguous")]
    AngleAtPi,
    #[error("validity mask is empty")]
    EmptyMask,
    #[error("match set is empty")]
    EmptyMatchSet,
    #[error("translation is numerically zero; essential matrix undefined")]
    DegenerateTranslation,
    #[error("masked mean of synthesized depth is not positive")]
    ZeroSynthMean,
    #[error("trajectories have different lengths ({expected} vs {got})")]
    LengthMismatch { expected: usize, got: usize },
    #[error("snippet {index} does not overlap its predecessor by two frames")]
    OverlapMismatch { index: usize },
    #[error("point configuration is degenerate; alignment undefined")]
    DegenerateConfiguration,
    #[error("homogeneous projection denominator is zero")]
    ProjectionSingular,
    #[error("posterior grid too small: boundary mass {boundary:.3e} exceeds {limit:.3e} of peak")]
    GridTooSmall { boundary: f64, limit: f64 },
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("loss diverged: total {total:.6e} exceeds 10x initial {initial:.6e}")]
    DivergenceDetected { initial: f64, total: f64 },
    #[error("loss evaluation produced a non-finite value")]
    NonFiniteEvaluation,
    #[error("could not draw enough co-visible samples (found {found} of {requested})")]
    InsufficientVisibility { requested: usize, found: usize },
    #[error("grid dimensions do not match: {expected} vs {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, GeomError>;
