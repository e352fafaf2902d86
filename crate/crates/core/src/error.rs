use thiserror::Error;

/// Errors produced by the model library.
///
/// Numeric payloads are carried as `f64` regardless of the scalar type the
/// failing routine was instantiated with.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration stopped at t = {t} after {steps} steps (step limit reached)")]
    StepLimitExceeded { t: f64, steps: usize },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("state left the nonnegative cone: component {component} = {value} at t = {t}")]
    PositivityViolation { t: f64, component: usize, value: f64 },

    #[error("integral of the death rate over one period is {integral}, expected a positive value")]
    DegenerateDecay { integral: f64 },

    #[error("virus-free solution was computed for different parameters (expected {expected:#x}, got {actual:#x})")]
    ParamsMismatch { expected: u64, actual: u64 },

    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("Newton iteration collapsed onto the boundary of the positive cone: {state:?}")]
    ConvergedToBoundary { state: [f64; 4] },

    #[error("could not bracket the reproduction number after {doublings} doublings (last lambda = {lambda})")]
    BracketFailure { doublings: usize, lambda: f64 },

    #[error("singular linear system")]
    SingularMatrix,

    #[error("invalid sweep value {value} for `{key}`: {reason}")]
    InvalidSweepValue { key: String, value: f64, reason: String },
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::InvalidInput(_)
                | Error::ParamsMismatch { .. }
                | Error::InvalidSweepValue { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
