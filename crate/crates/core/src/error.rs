use thiserror::Error;

/// Errors produced anywhere in the pricing, moment and optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite: {0}")]
    Cholesky(String),

    #[error("quadrature did not reach tolerance: estimate {estimate:e}, error {error:e} after {evaluations} evaluations")]
    Quadrature {
        estimate: f64,
        error: f64,
        evaluations: usize,
    },

    #[error("log-moneyness threshold {threshold} outside truncation range ({lower}, {upper})")]
    Truncation {
        threshold: f64,
        lower: f64,
        upper: f64,
    },

    #[error("finite-difference bump crosses a truncation boundary: {0}")]
    Step(String),

    #[error("degrees of freedom must exceed 4 for finite fourth moments, got {0}")]
    Nu(f64),

    #[error("U is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    SingularU { min_eigenvalue: f64 },

    #[error("option price vector is zero")]
    ZeroPriceVector,

    #[error("constraint matrix J is rank deficient: zeta is parallel to the price vector")]
    Rank,

    #[error("no stationary point for the CFVaR quadratic: {0}")]
    NoStationaryPoint(String),

    #[error("alpha must lie in (0, 1/2), got {0}")]
    Alpha(f64),

    #[error("portfolio budget v'x is zero")]
    ZeroBudget,

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("optimizer did not converge (best objective {best_objective:e})")]
    NonConvergence { best_objective: f64, best: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, Error>;
