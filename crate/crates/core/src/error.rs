use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural precondition (sizes, grid resolution, divisibility) failed.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A model or noise configuration violates a modelling assumption.
    #[error("{0}")]
    Assumption(String),

    #[error("config error: {0}")]
    Config(String),

    /// An iterative solve failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The state left the finite range (only expected for the untamed control).
    #[error("blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
