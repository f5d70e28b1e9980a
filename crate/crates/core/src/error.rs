use thiserror::Error;

use crate::protocol::RegistrationError;
use crate::world::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's inputs does not hold.
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration or scenario is malformed.
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid field: {}", format_violations(.0))]
    InvalidField(Vec<Violation>),

    #[error(transparent)]
    Registration(#[from] RegistrationError),

    /// A runtime invariant was broken by the simulation itself.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("comparison invalid: {0}")]
    ComparisonInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
