use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("iterative solver did not converge: {0}")]
    NoConvergence(String),
    #[error("rational direction: {0}")]
    RationalDirection(String),
    #[error("point excluded from the admissible region: {0}")]
    Excluded(String),
    #[error("geometry check failed: {0}")]
    Geometry(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
