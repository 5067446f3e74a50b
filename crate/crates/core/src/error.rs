use alloc::string::String;

/// Failure categories shared by every core operation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
