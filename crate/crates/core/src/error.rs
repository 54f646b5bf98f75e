use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density has zero or non-finite mass (integral = {0})")]
    ZeroMass(f64),

    #[error("density is not normalized (integral = {0})")]
    NotNormalized(f64),

    #[error("density is degenerate: {fraction:.3} of the mass sits below the floor")]
    DegenerateDensity { fraction: f64 },

    #[error("operation `{op}` is not supported on {domain} domains")]
    UnsupportedDomain { op: &'static str, domain: &'static str },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("Fisher information matrix is singular")]
    SingularFisher,

    #[error("non-finite state at step {step}, particle {particle}")]
    NonFinite { step: usize, particle: usize },

    #[error("non-finite density value at step {step}")]
    NonFiniteDensity { step: usize },

    #[error("{escaped:.4} of the ensemble lies outside the histogram domain")]
    Coverage { escaped: f64 },

    #[error("time step {dt:e} exceeds the stability bound {bound:e} ({reason})")]
    StabilityViolation { dt: f64, bound: f64, reason: &'static str },

    #[error("cumulative clipped negative mass {0:e} exceeds the budget")]
    ClipBudget(f64),

    #[error("group elements have different tags")]
    TagMismatch,

    #[error("rotation angle {0} is too close to the cut locus for the logarithm")]
    NearCutLocus(f64),

    #[error("series truncation needs more than {0} terms")]
    TruncationBudget(usize),

    #[error("mass matrix is singular")]
    SingularMass,

    #[error("Jacobian is singular")]
    SingularJacobian,

    #[error("noise matrix B0 is singular")]
    SingularNoise,

    #[error("domain too small: boundary density is {ratio:e} of the peak")]
    DomainTooSmall { ratio: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
