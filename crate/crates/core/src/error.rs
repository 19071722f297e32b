use thiserror::Error;

/// Errors raised by the estimators, bounds and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The two largest eigenvalues (squared singular values) coincide, so the
    /// dominant eigenvector is not unique.
    #[error("degenerate spectrum: the two largest eigenvalues coincide (λ₁ = {lambda1:e}, λ₂ = {lambda2:e})")]
    DegenerateSpectrum { lambda1: f64, lambda2: f64 },

    #[error("numerical degradation: relative error bound {rel_error_bound:e} exceeds tolerance")]
    NumericalDegradation { rel_error_bound: f64 },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("input matrix is identically zero")]
    ZeroMatrix,

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
