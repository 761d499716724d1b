use laplace_core::adjoint::AdjointError;
use laplace_core::models::ModelError;
use laplace_core::newton::NewtonError;
use laplace_core::posterior::PosteriorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    StrategyUnsuitable(String),
    #[error("gradient check failed: max relative error {max_rel_error:e} exceeds {tolerance:e}")]
    GradcheckFailed { max_rel_error: f64, tolerance: f64 },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::StrategyUnsuitable(_) => 3,
            CliError::GradcheckFailed { .. } => 4,
            CliError::Io(_) => 5,
            CliError::Other(_) => 6,
        }
    }
}

impl From<NewtonError> for CliError {
    fn from(e: NewtonError) -> Self {
        match e {
            NewtonError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            NewtonError::StrategyUnsuitable { .. } => CliError::StrategyUnsuitable(e.to_string()),
            NewtonError::InvalidSettings(_) | NewtonError::Dimension(_) => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<AdjointError> for CliError {
    fn from(e: AdjointError) -> Self {
        match e {
            AdjointError::Newton(inner) => inner.into(),
            AdjointError::Model(inner) => inner.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PosteriorError> for CliError {
    fn from(e: PosteriorError) -> Self {
        match e {
            PosteriorError::Adjoint(inner) => inner.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
