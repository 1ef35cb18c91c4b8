use std::path::PathBuf;

use asap_core::AsapError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("trajectory file {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("integration failed: {message} (partial output in {partial})")]
    Integration { message: String, partial: PathBuf },

    #[error(transparent)]
    Core(#[from] AsapError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Machine-readable error written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Invalid(_) => "invalid_input",
            Self::Schema { .. } => "schema",
            Self::Integration { .. } => "integration",
            Self::Core(_) => "numeric",
            Self::Io { .. } => "io",
        }
    }

    pub fn report(&self) -> ErrorReport {
        let path = match self {
            Self::Config { path, .. } | Self::Schema { path, .. } | Self::Io { path, .. } => Some(path.clone()),
            Self::Integration { partial, .. } => Some(partial.clone()),
            _ => None,
        };
        ErrorReport { error: self.kind(), message: self.to_string(), path }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}
