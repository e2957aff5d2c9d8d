use std::fmt;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inconsistent or unsupported configuration (shapes, counts, ids).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input bytes or text.
    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    /// Well-formed input whose values are out of range.
    #[error("validation error: {0}")]
    Validation(String),

    /// Non-finite loss during training.
    #[error("training diverged at epoch {epoch}, batch {batch} (loss = {loss})")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where in an input a parse error happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Offset(usize),
    Source(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Offset(o) => write!(f, "byte offset {o}"),
            Location::Source(s) => f.write_str(s),
        }
    }
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse_line(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { location: Location::Line(line), message: msg.into() }
    }

    pub(crate) fn parse_offset(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse { location: Location::Offset(offset), message: msg.into() }
    }

    /// True for errors caused by user input rather than a runtime fault.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Validation(_) | Error::Json(_)
        )
    }
}
