use thiserror::Error;

/// Errors produced by the work-distribution engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integrator exceeded {max_steps} steps before reaching t = {t}")]
    TooManySteps { max_steps: usize, t: f64 },

    #[error("solver tolerance not met at momentum p = {p}: {detail}")]
    SolverTolerance { p: f64, detail: String },

    #[error("evaluation outside the support of the distribution at W = {w}")]
    OutOfSupport { w: f64 },

    #[error("insufficient grid coverage: {0}")]
    Coverage(String),

    #[error("trajectory does not resolve the requested interval: {0}")]
    TrajectoryResolution(String),

    #[error("interval mismatch: {0}")]
    IntervalMismatch(String),

    #[error("tomography map is ill-conditioned: {0}")]
    Tomography(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
