//! Library half of the `znav` binary: configuration, commands and output.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

use znav::NavError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures and failed checks.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Nav(NavError::Numerical(_) | NavError::ChartExit { .. }) => 3,
            CliError::Nav(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}
