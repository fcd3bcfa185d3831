use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, solver, norm or experiment parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation (negative time, short trajectory, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported derivative order {0} (at most 4)")]
    UnsupportedOrder(usize),

    /// A quadrature or time-stepping budget was exhausted before the requested accuracy.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// An iteration stopped without meeting its tolerance.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// A run crossed its blow-up threshold where blow-up was not the object of study.
    #[error("blow-up: {0}")]
    Blowup(String),

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn resolution(msg: impl Into<String>) -> Self {
        Error::Resolution(msg.into())
    }
}
