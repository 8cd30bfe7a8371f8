use mcmi_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McmiError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("geometry mismatch: expected {expected}, got {got}")]
    Geometry { expected: String, got: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("not enough anchor images: need {need}, have {have}; warm up the anchor pool first")]
    InsufficientAnchors { need: usize, have: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image codec: {0}")]
    Codec(String),
}

pub type Result<T> = std::result::Result<T, McmiError>;

pub(crate) fn invalid(msg: impl Into<String>) -> McmiError {
    McmiError::Invalid(msg.into())
}
