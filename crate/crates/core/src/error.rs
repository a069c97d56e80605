use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("simulation failed: {0}")]
    Simulation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
