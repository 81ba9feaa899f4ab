use thiserror::Error;

/// Errors raised by model construction, the weight solvers and the integrator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure at t = {t:.6}: {what} (residual {residual:.3e})")]
    NumericFailure { what: String, t: f64, residual: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
}

impl Error {
    pub(crate) fn numeric(what: impl Into<String>, residual: f64) -> Self {
        Error::NumericFailure {
            what: what.into(),
            t: f64::NAN,
            residual,
        }
    }

    /// Attaches a simulation time to a numeric failure.
    pub(crate) fn at_time(self, time: f64) -> Self {
        match self {
            Error::NumericFailure { what, t, residual } if t.is_nan() => Error::NumericFailure {
                what,
                t: time,
                residual,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
