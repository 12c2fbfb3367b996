use thiserror::Error;

/// Errors raised by the solvers, the model and the I/O helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry in input")]
    NonFinite,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("CRB threshold {gamma_bar:.6e} is below the minimum achievable CRB {crb_min:.6e}")]
    Infeasible { gamma_bar: f64, crb_min: f64 },

    #[error("dual variables outside the dual domain: {0}")]
    InfeasibleDual(String),

    #[error("solver did not converge after {iterations} iterations (primal {primal:.6e}, dual {dual:.6e})")]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("Gram matrix X X^H is singular (min eigenvalue {min_eigenvalue:.3e})")]
    Singular { min_eigenvalue: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
