use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("unknown built-in {0}")]
    UnknownName(String),

    #[error("p-variation exponent p = {p} is below 1; continuous paths of finite p-variation with p < 1 are constant")]
    ExponentBelowOne { p: f64 },

    #[error("time {time} is not a grid time of the path")]
    OffGrid { time: f64 },

    #[error("interval [{start}, {end}] is empty or reversed")]
    EmptyInterval { start: f64, end: f64 },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("Young condition violated: theta = 1/p + 1/q = {theta} must exceed 1")]
    YoungCondition { theta: f64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{what} of size {requested} exceeds the configured cap {cap}")]
    ResourceLimit {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("covariance matrix is not positive definite at increment {index}")]
    NotPositiveDefinite { index: usize },

    #[error("non-finite state after time {last_time:?}")]
    BlowUp { last_time: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonFailure { residual: f64, iterations: usize },

    #[error("time {time} is at or beyond the caustic time {tau}")]
    Caustic { time: f64, tau: f64 },

    #[error("point lies outside the {what}")]
    OutOfDomain { what: String },

    #[error("singular Jacobian at {what}")]
    SingularJacobian { what: &'static str },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl Error {
    /// Failures of the numerics themselves (blow-up, non-convergence, caustics),
    /// as opposed to bad input.
    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::NewtonFailure { .. }
                | Error::Caustic { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::SingularJacobian { .. }
                | Error::OutOfDomain { .. }
        )
    }
}
