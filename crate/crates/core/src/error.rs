use thiserror::Error;

/// Errors raised by construction, sampling, and iteration.
///
/// Boundedness (A2) violations are *not* errors: a run that leaves the
/// monitored region halts with [`crate::runner::RunStatus::A2Violated`].
#[derive(Debug, Error)]
pub enum SaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite search direction at iteration {iter} for sample {sample:?}")]
    NonFiniteDirection { iter: u64, sample: Vec<f64> },

    #[error("search direction bound violated at iteration {iter}: |d| = {norm} exceeds declared K_d = {bound}")]
    DirectionBoundViolation { iter: u64, norm: f64, bound: f64 },

    #[error(
        "sample bound violated at iteration {iter}: |x| = {norm} exceeds declared K = {bound}"
    )]
    SampleBoundViolation { iter: u64, norm: f64, bound: f64 },

    #[error("non-finite iterate produced at iteration {iter}")]
    NonFiniteIterate { iter: u64 },

    #[error("non-finite energy for state index {state_index}")]
    NonFiniteEnergy { state_index: usize },

    #[error("state is not a member of the model's sample space: {state:?}")]
    StateNotInSupport { state: Vec<f64> },

    #[error("operation is defined only for binary (0/1) state spaces")]
    NonBinaryStateSpace,
}

pub type Result<T> = std::result::Result<T, SaError>;
