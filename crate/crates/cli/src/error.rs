use std::path::PathBuf;

use thiserror::Error;

/// Harness-level failures with their CLI exit codes.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown registry key `{0}`")]
    UnknownKey(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("config file: {0}")]
    Toml(String),

    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sa_core::SaError),
}

impl HarnessError {
    /// run/check/sweep exit with 2 for unknown registry keys, 1 otherwise;
    /// exit 3 (boundedness violation) is decided from the run status, not an
    /// error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::UnknownKey(_) => 2,
            _ => 1,
        }
    }
}
