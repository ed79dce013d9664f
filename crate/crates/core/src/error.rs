use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("missing parameter: {0}")]
    MissingParameter(&'static str),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("field is singular at {0:?}")]
    Singularity(Vec<f64>),
    #[error("integral diverges: {0}")]
    Divergence(String),
    #[error("budget exceeded after {evals} evaluations (error {error:.3e}, target {target:.3e})")]
    BudgetExceeded { evals: usize, error: f64, target: f64 },
    #[error("non-finite integrand value at {point:?}")]
    NonFiniteSample { point: Vec<f64> },
    #[error("sampler density vanished at {point:?}")]
    ZeroDensityHit { point: Vec<f64> },
    #[error("angular kernel is singular at t = 1")]
    SingularArgument,
    #[error("insufficient regularity: {0}")]
    Regularity(String),
    #[error("fundamental constant {value:.4e} is not resolved from zero (stderr {error:.3e})")]
    ZeroConstant { value: f64, error: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("verification failed at {} radii", .0.len())]
    VerificationFailure(Vec<(f64, f64)>),
    #[error("region contains no grid nodes")]
    EmptyRegion,
    #[error("infimum over the region is not positive")]
    ZeroInfimum,
    #[error("iteration limit reached (gradient norm {grad_norm:.3e})")]
    MaxItersExceeded { grad_norm: f64 },
    #[error("comparison principle violated at {} nodes", .0.len())]
    ComparisonViolation(Vec<usize>),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
}

pub type Result<T> = std::result::Result<T, Error>;
