use std::path::PathBuf;

use fpuq_nets::NetError;
use fpuq_physics::PhysicsError;
use fpuq_posterior::PosteriorError;
use fpuq_priors::PriorError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("missing input {0}; run the producing stage first")]
    Missing(PathBuf),
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("incompatible request: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Exists(_) => "exists",
            CliError::Missing(_) => "missing_input",
            CliError::Format { .. } => "format",
            CliError::Config(_) => "config",
            CliError::Incompatible(_) => "incompatible",
            CliError::Physics(_) => "physics",
            CliError::Net(_) => "network",
            CliError::Prior(_) => "prior",
            CliError::Posterior(_) => "posterior",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({"error": {"kind": self.kind(), "message": self.to_string()}})
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

pub(crate) fn format_err(path: impl Into<PathBuf>, message: impl ToString) -> CliError {
    CliError::Format {
        path: path.into(),
        message: message.to_string(),
    }
}
