use std::path::PathBuf;

use pasb_core::{DataError, ModelError};

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        CliError::Format { path: path.into(), msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Model(ModelError::InvalidConfig(_)) => EXIT_USAGE,
            CliError::Model(ModelError::Numeric { .. }) | CliError::Model(ModelError::NoSamples) => EXIT_NUMERIC,
            CliError::Data(_) | CliError::Io { .. } | CliError::Format { .. } => EXIT_DATA,
            CliError::Model(ModelError::DimensionMismatch { .. }) => EXIT_DATA,
        }
    }
}
