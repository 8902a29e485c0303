use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("kernel matrix not positive definite even with jitter {max_jitter:e}")]
    Cholesky { max_jitter: f64 },
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("darcy solve failed: {0}")]
    Solver(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, PhysicsError>;
