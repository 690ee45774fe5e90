use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error(
        "step rejected after {halvings} halvings at t = {time}; energies = {energies:?}"
    )]
    StepRejected {
        time: f64,
        halvings: u32,
        energies: Vec<f64>,
    },

    #[error("fundamental domain reduction did not terminate after {0} iterations")]
    DomainReduction(usize),

    #[error("correlations do not decay: {0}")]
    NonDecaying(String),

    #[error("averaging hypothesis fails: {0}")]
    Hypothesis(String),

    #[error("integrator drift {drift:e} exceeds tolerance {tolerance:e}; decrease the step size")]
    IntegratorDrift { drift: f64, tolerance: f64 },

    #[error("malformed table: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

/// Fails with [`Error::InvalidArgument`] unless `value` is finite and strictly positive.
pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::arg(name, format!("must be finite and > 0, got {value}")))
    }
}
