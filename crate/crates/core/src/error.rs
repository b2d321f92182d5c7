use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("coincident points {i} and {j}: energy diverges")]
    Divergence { i: usize, j: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("unsupported feature `{field}`: {detail}")]
    Unsupported { field: String, detail: String },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("row count mismatch: expected {expected}, found {found}")]
    RowCount { expected: usize, found: usize },

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad error classes, used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Malformed {
            what,
            detail: detail.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorClass::Config,
            Error::Io { .. } | Error::Unsupported { .. } | Error::Malformed { .. } => ErrorClass::Io,
            Error::RowCount { .. } | Error::NonFinite { .. } => ErrorClass::Io,
            Error::Divergence { .. } | Error::Numeric(_) | Error::Degenerate(_) => {
                ErrorClass::Numeric
            }
            Error::Context { source, .. } => source.class(),
        }
    }
}
