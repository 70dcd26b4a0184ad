use thiserror::Error;

use crate::optimize::OptimizationTrace;

pub type Result<T> = std::result::Result<T, LieError>;

#[derive(Debug, Error)]
pub enum LieError {
    #[error("matrix is not in the Lie algebra (projection residual {residual:.3e})")]
    NotInAlgebra { residual: f64 },

    #[error("group membership violated (residual {residual:.3e}, tolerance {tol:.1e})")]
    MembershipViolation { residual: f64, tol: f64 },

    #[error("invalid group specification: {0}")]
    InvalidGroup(String),

    #[error("Cayley transform is singular (condition number {condition:.3e})")]
    SingularCayley { condition: f64 },

    #[error("Cayley retraction does not close on group `{0}`")]
    CayleyNotClosed(String),

    #[error(
        "algebra element of norm {norm:.6} is outside the retraction domain (radius {radius})"
    )]
    OutOfDomain { norm: f64, radius: f64 },

    #[error("retraction identity violated (residual {residual:.3e}); increase series_order")]
    IdentityViolation { residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "nonlinear solve did not converge (residual {residual:.3e} after {iterations} iterations)"
    )]
    NoConvergence { residual: f64, iterations: usize },

    #[error("trajectory is missing the `{0}` field")]
    MissingField(&'static str),

    #[error("Hamiltonian is not left-invariant (|d_g h| = {residual:.3e})")]
    NotLeftInvariant { residual: f64 },

    #[error("vector field has no parameters")]
    NoParameters,

    #[error("line search failed to decrease the cost at iteration {iteration}")]
    LineSearchFailure {
        iteration: usize,
        trace: Box<OptimizationTrace>,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<LieError>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl LieError {
    /// Attach a step index, keeping the innermost one if already present.
    pub fn at_step(self, step: usize) -> LieError {
        match self {
            e @ LieError::AtStep { .. } => e,
            e => LieError::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any step context stripped.
    pub fn root(&self) -> &LieError {
        match self {
            LieError::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}
