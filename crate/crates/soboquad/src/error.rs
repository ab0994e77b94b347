use thiserror::Error;

/// Errors surfaced by the solver and its building blocks.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("interpolation set is not poised (singular KKT system)")]
    NotPoised,

    #[error("degenerate inverse update (|sigma| = {sigma:.3e} below safeguard)")]
    DegenerateUpdate { sigma: f64 },

    #[error("duplicate interpolation point rejected")]
    DuplicatePoint,

    #[error("geometry improvement failed: every candidate direction is degenerate")]
    GeometryFailure,

    #[error("model base point does not match the region center; shift the model first")]
    BaseMismatch,

    #[error("KKT factor is stale (residual invariant violated); re-factorize")]
    StaleFactor,

    #[error("unknown problem '{name}'; available: {available}")]
    UnknownProblem { name: String, available: String },

    #[error("problem '{name}' does not support dimension {dim}: {reason}")]
    UnsupportedDimension {
        name: String,
        dim: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("record set is empty or malformed: {0}")]
    BadRecords(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
