use alloc::string::String;

/// Every failure the core library can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("the delta kernel is a distribution and has no pointwise value")]
    DistributionalKernel,

    #[error("lag {lag} lies outside the tabulated range [0, {max}]")]
    LagOutOfRange { lag: f64, max: f64 },

    #[error("quadrature did not converge: error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureNonConvergence { estimate: f64, tolerance: f64 },

    #[error("covariance is not positive semidefinite: minimum eigenvalue {min:e} against maximum {max:e}")]
    NotPositiveSemidefinite { min: f64, max: f64 },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("{what} requires {requirement}")]
    Unsupported { what: &'static str, requirement: &'static str },

    #[error("time grids differ at index {index}: {left} vs {right}")]
    GridMismatch { index: usize, left: f64, right: f64 },

    #[error("{failed} of {total} trajectories aborted, more than the tolerated 1%")]
    TooManyFailures { failed: usize, total: usize },

    #[error("joint dimension {dim} exceeds the bound {max}")]
    DimensionBound { dim: usize, max: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
