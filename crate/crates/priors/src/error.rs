use fpuq_nets::NetError;
use fpuq_numcore::NumError;
use thiserror::Error;

use crate::grid::FieldTag;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("sensor grid: {0}")]
    Grid(String),
    #[error("prior has no physics operator for derived fields")]
    MissingOperator,
    #[error("prior cannot produce field `{0}`")]
    UnsupportedField(FieldTag),
    #[error("{what} is {value} at step {step}")]
    Diverged {
        what: &'static str,
        value: f64,
        step: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PriorError>;
