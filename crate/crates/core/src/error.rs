use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Caller supplied something outside the operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// An internal identity failed. This points at a recipe or solver bug,
    /// never at user input.
    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn inconsistent(msg: impl Into<String>) -> Error {
    Error::Inconsistent(msg.into())
}
