use thiserror::Error;

/// Unified error type for the solver and certificate pipeline.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid dimension d = {0}: {1}")]
    InvalidDimension(usize, &'static str),

    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("quadrature failed to reach tolerance {tol:e} (residual {residual:e})")]
    QuadratureNonConvergence { tol: f64, residual: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("field oracle inconsistent: {0}")]
    OracleInconsistent(String),

    #[error("CFL violation: dt = {dt} exceeds dx/V0 = {max_dt}")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("numerical instability at t = {time}: {detail}")]
    NumericalInstability { time: f64, detail: String },

    #[error("no convergence after {steps} steps (last residual {residual:e}, tol {tol:e})")]
    NonConvergence { steps: usize, residual: f64, tol: f64 },

    #[error("insufficient decay range in trajectory: {0}")]
    InsufficientDecayRange(String),

    #[error("infeasible Harris level radius: {0}")]
    InfeasibleRadius(String),

    #[error("certificate failed: {what} (margin {margin:e})")]
    CertificateFailed { what: String, margin: f64 },

    #[error("fixed-point iteration diverged: residuals {trace:?}")]
    FixedPointDiverged { trace: Vec<f64> },

    #[error("response function is not smooth enough for this operation: {0}")]
    NonsmoothResponse(&'static str),

    #[error("resource budget exceeded: {detail} (estimated {estimate:e} node-steps, budget {budget:e})")]
    ResourceExceeded {
        detail: String,
        estimate: f64,
        budget: f64,
    },

    #[error("state file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
