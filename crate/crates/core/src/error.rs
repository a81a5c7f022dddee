use thiserror::Error;

pub type Result<T> = std::result::Result<T, EsbgkError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EsbgkError {
    /// Invalid configuration value; `field` names the offending parameter.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("negative distribution value {value} at phase index {index}")]
    Negative { index: usize, value: f64 },

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("covariance not positive definite in cell {cell}")]
    NotPositiveDefinite { cell: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient coverage: {0}")]
    Coverage(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl EsbgkError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        EsbgkError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        EsbgkError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for EsbgkError {
    fn from(e: std::io::Error) -> Self {
        EsbgkError::Io(e.to_string())
    }
}
