//! Configuration, orchestration and persistence for the `afslab` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use afs_lab::afs::AfsError;
use afs_lab::mc::McError;
use afs_lab::operator::OperatorError;
use afs_lab::spectral::SpectralError;
use thiserror::Error;

pub use commands::{run_command, Command, Outcome};
pub use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    /// 2 for usage and configuration errors, 3 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::NoSamples | McError::InvalidParams(_) | McError::Mismatch(_) | McError::Geometry(_) => {
                CliError::Config(e.to_string())
            }
            McError::Operator(
                OperatorError::TooLarge { .. } | OperatorError::SiteOutside(_) | OperatorError::Geometry(_),
            ) => CliError::Config(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::InvalidParams(_) | SpectralError::Geometry(_) => CliError::Config(e.to_string()),
            SpectralError::Mc(m) => m.into(),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<AfsError> for CliError {
    fn from(e: AfsError) -> Self {
        match e {
            AfsError::AmbiguousSwitch { .. } | AfsError::Interval(_) => CliError::Internal(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
