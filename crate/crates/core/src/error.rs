use thiserror::Error;

/// Errors shared by all core modules.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Array shapes or index ranges disagree with a configuration.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An input value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An inconsistent or unusable configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A stated precondition of a constructive builder is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The requested instance is outside the supported construction envelope.
    #[error("unsupported scale: {0}")]
    UnsupportedScale(String),
    /// A serialized document could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
