use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] dwa_core::Error),
    #[error("{0}")]
    Output(#[from] std::io::Error),
    #[error("oracle check failed: {0}")]
    OracleFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) | CliError::Output(_) => EXIT_RUNTIME,
            CliError::OracleFailed(_) => EXIT_ORACLE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}
