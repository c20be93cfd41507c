use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the command-line workflows.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] focalsweep::Error),

    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for malformed input, 3 for model errors, 1 for
    /// IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if e.is_model_error() => 3,
            CliError::Model(focalsweep::Error::Io { .. }) | CliError::Io { .. } | CliError::Csv { .. } => 1,
            CliError::Model(_)
            | CliError::Config { .. }
            | CliError::InvalidConfig(_)
            | CliError::InvalidInput(_)
            | CliError::Json { .. } => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
