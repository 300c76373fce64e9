use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value violates a data invariant (non-finite coordinate, length mismatch, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A caller-supplied parameter is out of its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The operation has nothing to aggregate over.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A file or byte buffer does not follow the expected layout.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A training configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
