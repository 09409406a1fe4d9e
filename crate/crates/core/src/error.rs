use thiserror::Error;

/// Errors produced by the co-clustering toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graphon: {0}")]
    InvalidGraphon(String),

    #[error("{what} = {value} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} at position {index} is not in 0..{k}")]
    InvalidLabel { index: usize, label: usize, k: usize },

    #[error("latent vector at position {index} is outside the unit-ball cap: {reason}")]
    InvalidLatent { index: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadratic program did not converge after {iterations} iterations (duality gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("{context}: {source}")]
    Instance {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach an instance identifier to an error raised deep inside an experiment.
    pub fn in_instance(self, context: impl Into<String>) -> Self {
        Error::Instance {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
