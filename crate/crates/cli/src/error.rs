use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation: exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The work ran but failed for a domain reason: exit code 1.
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Core(#[from] scl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) | CliError::Core(_) => 1,
        }
    }
}
