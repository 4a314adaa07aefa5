use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("trajectory id {0} appears more than once")]
    DuplicateId(usize),

    #[error("unknown trajectory id {0}")]
    UnknownId(usize),

    #[error("query arity: {0}")]
    Arity(String),

    #[error("invalid response: {0}")]
    InvalidResponse(String),

    #[error("invalid action {action} at ({x}, {y}): {reason}")]
    InvalidAction {
        action: String,
        x: i32,
        y: i32,
        reason: String,
    },

    #[error("empty action sequence")]
    EmptySequence,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("weights are not unit-norm (norm = {0})")]
    NotNormalized(f64),

    #[error("log-posterior is not finite at start point {0:?}")]
    NonFiniteStart(Vec<f64>),

    #[error("mean direction is undefined (norm of sample mean = {0:e})")]
    DegenerateMean(f64),

    #[error("unknown {what} `{name}`; valid options: {valid}")]
    UnknownName {
        what: &'static str,
        name: String,
        valid: String,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("{0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
