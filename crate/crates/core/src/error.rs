use thiserror::Error;

use crate::backend::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed Netpbm input. `offset` is the byte position where parsing failed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A caller broke an operation's precondition (shape, color space, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("image too small: {width}x{height} cannot be cropped to a multiple of {factor}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        factor: usize,
    },

    /// Invalid operator or loop configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error(
        "refinement diverged at iteration {iteration} with lambda {lambda}: \
         residual {residual:.6e} exceeds 10x the initial residual {initial:.6e}"
    )]
    Divergence {
        lambda: f32,
        iteration: usize,
        residual: f64,
        initial: f64,
    },

    /// An operator failed inside the refinement loop.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True when the root cause is a backend failure, looking through iteration wrappers.
    pub fn is_backend(&self) -> bool {
        match self {
            Error::Backend(_) => true,
            Error::AtIteration { source, .. } => source.is_backend(),
            _ => false,
        }
    }
}
