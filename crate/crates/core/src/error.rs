use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum AsapError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("metric {0} needs an antiderivative the profile does not provide")]
    UnsupportedMetric(&'static str),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cycle enumeration exceeded the limit of {limit} {what}")]
    EnumerationLimit { limit: usize, what: &'static str },

    #[error("reconstruction is singular: (A0 v)_{row} = 0")]
    SingularReconstruction { row: usize },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("integration diverged at t = {time}: invariant drift {drift:e} exceeds {limit:e}")]
    IntegrationDiverged { time: f64, drift: f64, limit: f64 },

    #[error("step size underflow at t = {time} (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("team generation failed: {0}")]
    Generation(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("checkpoint i/o: {0}")]
    Checkpoint(#[from] std::io::Error),
}

pub type Result<T, E = AsapError> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(AsapError::DimensionMismatch { expected, found })
    }
}
