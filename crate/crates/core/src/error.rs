use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("assembly failed for element pair ({0}, {1}): non-finite contribution")]
    Assembly(usize, usize),
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("{0} did not converge after {1} iterations")]
    NoConvergence(&'static str, usize),
    #[error("newton iteration diverged: residual {residual:.3e} after {iters} iterations")]
    NewtonDivergence { residual: f64, iters: usize },
    #[error("singular jacobian")]
    SingularJacobian,
    #[error("energy certificate violated at step {step}: defect {defect:.3e} > tol {tol:.3e}")]
    CertificateViolation { step: usize, defect: f64, tol: f64 },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("property check failed: {0}")]
    VerificationFailed(String),
    #[error("fit refused: {0}")]
    Fit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
