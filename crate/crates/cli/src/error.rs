use thiserror::Error;

/// Command-level errors carrying the process exit code:
/// 1 guarantee/hypothesis failure, 2 usage/parse, 3 internal/blow-up.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Hypothesis(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Hypothesis(_) => 1,
            CliError::Internal(_) => 3,
        }
    }

    /// Core errors raised while reading user-provided inputs are usage
    /// errors; everything else is internal.
    pub fn from_config(err: rdcontrol::Error) -> Self {
        CliError::Usage(err.to_string())
    }

    pub fn from_run(err: rdcontrol::Error) -> Self {
        use rdcontrol::Error as E;
        match err {
            E::Unsatisfiable(msg) => CliError::Hypothesis(msg),
            E::InvalidInput(_) | E::InvalidModel(_) | E::DimensionMismatch { .. } => {
                CliError::Usage(err.to_string())
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
