use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("arrows are not composable: endpoint mismatch {mismatch:.3e}")]
    NotComposable { mismatch: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("argument outside the logarithm branch: {0}")]
    OutOfBranch(String),

    #[error("fiber Hessian is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularHessian { condition: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("shooting Jacobian is singular")]
    SingularJacobian,

    #[error("discrete regularity matrix is singular (condition number {condition:.3e})")]
    SingularRegularityMatrix { condition: f64 },

    #[error("retraction is not invertible at the requested point")]
    SingularTau,

    #[error("integrator step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("no step size above 1e-3 satisfies the convexity inequalities")]
    EmptyCertificate,

    #[error("only {usable} usable grid points, at least 3 are needed for a fit")]
    InsufficientPoints { usable: usize },

    #[error("instance mismatch: {0}")]
    InstanceMismatch(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
