use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid encoded window: {0}")]
    Codec(String),

    #[error("usage error: {0}")]
    Usage(String),

    /// The example cannot contribute to training or inference (no available
    /// points, no scored targets, ...).
    #[error("example rejected: {0}")]
    Rejected(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("scaling error: {0}")]
    Scaling(String),

    #[error("benchmark protocol error: {0}")]
    Protocol(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("gradient check: {0}")]
    GradCheck(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
