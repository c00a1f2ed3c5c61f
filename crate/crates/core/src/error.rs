use thiserror::Error;

/// Errors raised by the numerical primitives, engines and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Every log-weight is `-inf`: the particle system died out.
    #[error("extinction: all weights are zero ({context})")]
    Extinction { context: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("weights are not normalized (sum = {sum})")]
    Unnormalized { sum: f64 },

    #[error("step {step} exceeds model horizon {horizon}")]
    HorizonExceeded { step: usize, horizon: usize },

    /// Mass lost off the edge of a quadrature grid beyond tolerance.
    #[error("quadrature drift {drift:e} exceeds {tolerance:e} at step {step}")]
    QuadratureDrift { step: usize, drift: f64, tolerance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn extinction(context: impl Into<String>) -> Self {
        Error::Extinction {
            context: context.into(),
        }
    }

    /// True for failures caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Extinction { .. } | Error::QuadratureDrift { .. } | Error::Unnormalized { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
