use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{what}: range [{start}, {end}) exceeds available length {available}")]
    OutOfBounds {
        what: &'static str,
        start: usize,
        end: usize,
        available: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("no feasible alignment: {0}")]
    Infeasible(String),

    #[error("invalid state: {0}")]
    State(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
