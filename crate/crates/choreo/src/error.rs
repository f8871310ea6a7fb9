use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors surfaced by the IO layer and the command-line driver.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] choreo_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    /// 1 for bad input, 2 for IO failures, 3 for internal faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(choreo_core::Error::State(_)) | CliError::Internal(_) => 3,
            CliError::Core(_) | CliError::Parse { .. } | CliError::Config(_) => 1,
            CliError::Io { .. } => 2,
        }
    }
}
