use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("basis centers are not uniformly spaced by delta = {delta}")]
    NonUniformCenters { delta: f64 },

    /// A time step exceeds one of the positivity/stability bounds and the
    /// caller did not ask to force it.
    #[error("time step {dt} exceeds the {bound_name} bound {bound}")]
    StepTooLarge {
        dt: f64,
        bound: f64,
        bound_name: &'static str,
    },

    #[error("linear system is singular (pivot {pivot} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("line search failed after {shrinks} step reductions")]
    LineSearchFailed { shrinks: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidParameter { name, reason }
    }
}
