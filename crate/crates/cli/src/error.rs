//! Error type shared by every subcommand, carrying the process exit status.
//!
//! Exit statuses: 0 success, 1 usage or configuration error, 2 data error,
//! 3 the sampler ran to completion but did not converge.

use cogphylo::error::Error as CoreError;

pub const EXIT_SUCCESS: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_UNCONVERGED: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The invocation or configuration is wrong; nothing was attempted.
    #[error("{0}")]
    Usage(String),
    /// The inputs were read but could not be processed.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            // Missing trained artifacts, absent expert ids, and similar
            // misconfigurations are the caller's to fix.
            CoreError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("i/o error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
