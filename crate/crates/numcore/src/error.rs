use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("non-finite value in block `{block}`")]
    NonFinite { block: String },
    #[error("unknown parameter block `{0}`")]
    UnknownBlock(String),
    #[error("duplicate parameter block `{0}`")]
    DuplicateBlock(String),
    #[error("derivative order must be 1 or 2, got {0}")]
    DerivativeOrder(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NumError>;
