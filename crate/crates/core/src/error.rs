use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("capacitance matrix is not positive definite")]
    NonPositiveDefinite,
    #[error("charge basis not converged: {0}")]
    ConvergenceFailure(String),
    #[error("level index {index} out of range (have {available})")]
    IndexOutOfRange { index: usize, available: usize },
    #[error("transition {0} lies inside the cavity guard band")]
    DegenerateResonance(String),
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("quadrature did not reach tolerance: {0}")]
    QuadratureFailure(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("factorization failed: {0}")]
    FactorizationFailure(String),
    #[error("both amplitudes are zero")]
    BothZero,
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("unphysical input: {0}")]
    UnphysicalInput(String),
    #[error("time step too coarse: {0}")]
    StepTooCoarse(String),
    #[error("no bracketing interval: {0}")]
    Bracketing(String),
    #[error("integration failed: {0}")]
    IntegrationFailure(String),
    #[error("no feasible point: {0}")]
    NoFeasiblePoint(String),
    #[error("outside the valid domain: {0}")]
    OutOfDomain(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
