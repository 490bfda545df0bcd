use std::fmt;

/// Errors produced by every fallible operation in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("integrity error at byte offset {offset}: {reason}")]
    Integrity { offset: usize, reason: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("signal too short: {0}")]
    Length(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes used for CLI exit codes and C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input, bad config, bad file: exit code 1.
    Invalid,
    /// Something failed while computing: exit code 2.
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension(_)
            | Error::Validation(_)
            | Error::Config(_)
            | Error::Integrity { .. }
            | Error::Version { .. }
            | Error::Length(_) => ErrorKind::Invalid,
            Error::State(_) | Error::Divergence(_) | Error::Io(_) => ErrorKind::Runtime,
        }
    }

    pub(crate) fn dim(args: fmt::Arguments<'_>) -> Self {
        Error::Dimension(args.to_string())
    }
}
