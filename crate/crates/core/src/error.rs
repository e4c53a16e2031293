use thiserror::Error;

use crate::picard::IterationTrace;

#[derive(Debug, Error)]
pub enum SsrError {
    #[error("model error: {0}")]
    Model(String),
    #[error("pencil is not diagonalizable (eigenvector condition {cond:.3e})")]
    Nondiagonalizable { cond: f64 },
    #[error("damping is not proportional (relative off-diagonal modal damping {offdiag:.3e})")]
    Proportionality { offdiag: f64 },
    #[error("resonance: {0}")]
    Resonance(String),
    #[error("unstable eigenvalue: {0}")]
    Stability(String),
    #[error("discretization error: {0}")]
    Discretization(String),
    #[error("iteration diverged after {iterations} iterations")]
    Diverged { iterations: usize },
    #[error("no convergence after {iterations} iterations (last step {last:.3e})")]
    MaxIter { iterations: usize, last: f64 },
    #[error("singular Jacobian (relative pivot {pivot:.3e})")]
    SingularJacobian { pivot: f64 },
    #[error("both Picard and Newton failed")]
    BothFailed {
        picard: Box<IterationTrace>,
        newton: Box<IterationTrace>,
    },
    #[error("continuation step failed after {halvings} step halvings")]
    StepFailed { halvings: usize },
    #[error("seed rejected: {0}")]
    SeedRejected(String),
    #[error("branch point: {0}")]
    BranchPoint(String),
    #[error("transient not decayed after {periods} periods (last window change {change:.3e})")]
    TransientNotDecayed { periods: usize, change: f64 },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, SsrError>;
