use thiserror::Error;

/// Errors surfaced by the dilation pipeline.
///
/// Every failure mode carries enough context to tell *which* hypothesis or
/// numerical guard tripped; callers map these onto exit codes or reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e} exceeds {tol:.3e}")]
    NotHermitian { asymmetry: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:.3e} below -{tol:.3e}")]
    NotPsd { eigenvalue: f64, tol: f64 },

    #[error("columns are not an isometry: defect {defect:.3e} exceeds {tol:.3e}")]
    NotIsometric { defect: f64, tol: f64 },

    #[error("iteration did not converge within {iterations} steps (last delta {last_delta:.3e})")]
    NoConvergence { iterations: usize, last_delta: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("tuple validation failed: {0}")]
    InvalidTuple(String),

    #[error("tuple is outside the required positivity class: {0}")]
    ClassViolation(String),

    #[error("unitary lifting failed: {context} (residual {residual:.3e})")]
    LiftFailed { residual: f64, context: String },

    #[error("linear solve is inconsistent: residual {residual:.3e} exceeds {tol:.3e}")]
    SolveResidual { residual: f64, tol: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
