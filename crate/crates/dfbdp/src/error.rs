//! Error type shared across the solver library.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated (bad dimension, nonpositive
    /// step size, malformed parameter, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced a non-finite value. The message carries enough
    /// context (node, sample index, iteration) to locate the failure.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// The requested operation needs data the problem does not provide,
    /// e.g. error measures on a problem without an exact solution.
    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericFailure(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
