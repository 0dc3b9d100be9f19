//! Config-driven runner: `run`, `verify` and `sweep`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration,
//! 3 runtime abort, 4 failed verification.

pub mod commands;
pub mod config;
pub mod output;

use hpush_core::{EngineError, ValidationError};
use thiserror::Error;

pub use commands::{cmd_run, cmd_sweep, cmd_verify, Options};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(ValidationError),
    #[error("run aborted: {0}")]
    Runtime(EngineError),
    #[error("invariant violated: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) | Self::Invalid(_) => 2,
            Self::Runtime(_) => 3,
            Self::Verification(_) => 4,
        }
    }
}
