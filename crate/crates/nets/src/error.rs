use fpuq_numcore::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("{context}: expected width {expected}, got {actual}")]
    Width {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },
    #[error("flow scale not strictly positive in block {0}")]
    NonPositiveScale(usize),
    #[error("empty dataset")]
    EmptyData,
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
