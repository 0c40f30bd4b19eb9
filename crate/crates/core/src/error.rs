use thiserror::Error;

/// Errors raised by the model, estimation and structural routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GstvarError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("regime {regime}: I - sum(A) is singular (unit root)")]
    SingularMeanSystem { regime: usize },

    #[error("regime {regime} is not stationary (companion spectral radius {radius})")]
    NonstationaryRegime { regime: usize, radius: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("all regime densities underflow at t = {t}")]
    AllDensitiesUnderflow { t: usize },

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("transition weight parameters are tied; the point is not identified")]
    TiedAlphas,

    #[error("no feasible individual in the final population")]
    NoFeasibleIndividual,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("all {rounds} estimation rounds failed")]
    AllRoundsFailed { rounds: usize },

    #[error("every local solution was filtered ({rounds} rounds)")]
    NoAdequateSolution { rounds: usize },

    #[error("the Hessian is singular")]
    SingularHessian,

    #[error("no histories for regime {regime} at threshold {threshold}")]
    EmptyHistorySet { regime: usize, threshold: f64 },

    #[error("degenerate scaling: {0}")]
    ScaleDegenerate(String),

    #[error("all shocks produce identically zero responses")]
    ZeroDenominator,

    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },
}

pub type Result<T> = std::result::Result<T, GstvarError>;
