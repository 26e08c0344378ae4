use thiserror::Error;

/// Errors raised by the library.
///
/// Infinite misfit values are not errors; they are returned as `f64::INFINITY`
/// and handled by the solver and stopping logic.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    Alignment(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible point: {0}")]
    Feasibility(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("argument {value} outside of [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Alignment(_) => "alignment",
            Error::InvalidInput(_) => "invalid_input",
            Error::Feasibility(_) => "feasibility",
            Error::Numeric(_) => "numeric",
            Error::Unsupported(_) => "unsupported",
            Error::Range { .. } => "range",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
