use std::path::PathBuf;

/// Errors raised across the toolkit.
///
/// The variants line up with the CLI exit-code classes: configuration and
/// validation problems are user-fixable, I/O and ingestion are runtime
/// failures, and backend errors come from the inference stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("empty mask for class {0}")]
    EmptyMask(String),

    #[error("ingestion error for {}: {reason}", path.display())]
    Ingest { path: PathBuf, reason: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Ingest { path: path.into(), reason: reason.into() }
    }

    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Validation(_) | Error::EmptyMask(_) => {
                ErrorKind::Validation
            }
            Error::Backend(_) => ErrorKind::Backend,
            Error::Ingest { .. } | Error::Io { .. } | Error::Json(_) => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
    Backend,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
