use thiserror::Error;

/// Errors raised by the modeling library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric parameter lies outside the domain of the model.
    #[error("parameter out of domain: {0}")]
    Domain(String),
    /// A structural inconsistency (empty collections, mismatched codings, ...).
    #[error("structural error: {0}")]
    Structural(String),
    /// Malformed textual input (labels, scenario files, schedules).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
