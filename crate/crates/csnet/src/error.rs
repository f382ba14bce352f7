use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Error, Debug)]
pub enum CsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite loss in block {block} at step {step}")]
    NonFiniteLoss { block: usize, step: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CsError>;

impl CsError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CsError::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        CsError::ShapeMismatch(msg.into())
    }
}
