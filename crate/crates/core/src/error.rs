//! Crate-wide error type.
//!
//! All fallible library entry points return [`Result`]. The variants separate
//! problems with the *call* (bad arguments, incomplete configuration) from
//! problems with the *data* (malformed files, mismatched identifiers), which
//! lets callers map them onto distinct process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file or record violates its expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// Text could not be parsed; `location` is a line number or a character
    /// offset into the input, depending on the format.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// An identifier that must be unique was seen twice.
    #[error("duplicate identifier: {0}")]
    Duplicate(String),

    /// A function argument violates the documented preconditions.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A required configuration entry is missing or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two inputs that must describe the same objects disagree.
    #[error("data mismatch: {0}")]
    Mismatch(String),

    /// A requested statistic has no defined value for the given input.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Convenience constructor for parse errors keyed by line number.
    pub fn parse_at_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    /// Convenience constructor for parse errors keyed by character offset.
    pub fn parse_at_offset(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("offset {offset}"),
            message: message.into(),
        }
    }
}
