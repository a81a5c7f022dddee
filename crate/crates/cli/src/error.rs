use esbgk_core::EsbgkError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration at {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("invariant violated: {0}")]
    Verify(String),
    #[error("run stopped early: {0}")]
    Aborted(String),
    #[error(transparent)]
    Core(EsbgkError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<EsbgkError> for CliError {
    fn from(e: EsbgkError) -> Self {
        match e {
            EsbgkError::Config { field, reason } => CliError::Config { field, reason },
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}
