use thiserror::Error;

/// Errors raised by the sampler and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("scale matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all component densities underflow at the evaluation point")]
    DegeneratePoint,

    #[error("series is constant; autocorrelation is undefined")]
    DegenerateSeries,

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("all importance weights underflow at tempering stage {stage}")]
    WeightUnderflow { stage: usize },

    #[error("non-finite log-density at the start point")]
    NonFiniteStart,

    #[error("unknown {kind}: {name}")]
    Unknown { kind: &'static str, name: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
