use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("channel index {index} out of range 1..={count}")]
    ChannelIndex { index: usize, count: usize },

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("numerical failure: {message}")]
    NumericalFailure { message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("grid resolution too coarse: {0}")]
    Resolution(String),

    #[error("degenerate constraint set: {0}")]
    Degeneracy(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("integration accuracy: {0}")]
    Accuracy(String),

    #[error("drive reconstruction singular at t = {time}: {message}")]
    ReconstructionSingularity { time: f64, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
