use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A state or parameter left the admissible region.
    #[error("domain error: {0}")]
    Domain(&'static str),

    /// The Riemann pressure function has no admissible root.
    #[error("riemann problem has no vacuum-free solution")]
    NoSolution,

    /// The shock-curve decomposition did not converge.
    #[error("decomposition did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The explicit reaction step is too large for the local rate.
    #[error("reaction step too large: eps * phi(T) = {0}")]
    StepTooLarge(f64),

    /// The interaction count exceeded the configured budget.
    #[error("collision cascade: more than {0} interactions")]
    CollisionCascade(usize),

    /// Input data violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(&'static str),
}
