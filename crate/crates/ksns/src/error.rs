use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied parameters was violated.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation contract was violated by its input.
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity showed up where a finite value was required.
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    /// A fit window touched the torus-saturation or resolution limit.
    #[error("invalid fit window: {0}")]
    InvalidWindow(String),

    /// The Wiener increment stream was exhausted or mis-stepped.
    #[error("wiener stream: {0}")]
    Wiener(String),

    /// An ensemble could not produce usable statistics.
    #[error("ensemble failed: {0}")]
    EnsembleFailed(String),

    /// Malformed or inconsistent checkpoint container.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
