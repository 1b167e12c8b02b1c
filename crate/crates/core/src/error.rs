//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid bounds: lo > hi at component {component}")]
    InvalidBounds { component: usize },

    #[error("control input outside input bounds at component {component}")]
    InputOutOfBounds { component: usize },

    #[error("{context}: need at least {needed} samples, got {got}")]
    InsufficientSamples {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("unidentifiable data: {0}")]
    Unidentifiable(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown traffic class `{0}`")]
    UnknownClass(String),

    #[error("negative offered load for class `{class}`")]
    NegativeLoad { class: String },

    #[error("trace exhausted at tick {tick} (trace length {len}); set `loop = true` to wrap around")]
    TraceExhausted { tick: u64, len: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
