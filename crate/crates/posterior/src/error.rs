use fpuq_nets::NetError;
use fpuq_numcore::NumError;
use fpuq_priors::{FieldTag, PriorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid observation: {0}")]
    Observation(String),
    #[error("model has no surrogate for field `{0}`")]
    UnsupportedField(FieldTag),
    #[error("minibatch of {requested} exceeds the {available} observations of `{field}`")]
    Batch {
        field: FieldTag,
        requested: usize,
        available: usize,
    },
    #[error("{what} is not finite (value {value}) at step {step}")]
    NonFinite {
        what: &'static str,
        value: f64,
        step: usize,
    },
    #[error("every NUTS transition diverged ({transitions} transitions, final step size {step_size:e})")]
    AllDivergent { transitions: usize, step_size: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PosteriorError>;
