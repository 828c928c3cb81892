use thiserror::Error;

/// Failures raised anywhere in the solver pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("volatility is not positive at x = {0}")]
    NonPositiveVolatility(f64),
    #[error("discount rate violates its floor or cap at x = {0}")]
    DiscountFloorViolated(f64),
    #[error("non-finite coefficient at x = {0}")]
    NonFiniteCoefficient(f64),
    #[error("quadrature failed on [{a}, {b}] (error estimate {err:e})")]
    QuadratureFailure { a: f64, b: f64, err: f64 },
    #[error("fundamental solution branches not separable: {0}")]
    SolutionBranchAmbiguous(String),
    #[error("boundary at infinity is not natural: {0}")]
    NaturalBoundaryViolated(String),
    #[error("boundary classification inconclusive: {0}")]
    InconclusiveClassification(String),
    #[error("theta/r is not unimodal: {0}")]
    UnimodalityViolated(String),
    #[error("integrability check failed: {0}")]
    IntegrabilityCheckFailed(String),
    #[error("tail of the integral could not be bounded beyond x = {0}")]
    TailBoundUnattainable(f64),
    #[error("limit did not stabilize: {0}")]
    LimitNotStabilized(String),
    #[error("no bracket found: {0}")]
    BracketNotFound(String),
    #[error("root not bracketed: {0}")]
    RootNotBracketed(String),
    #[error("cost {c} lies within 1e-9 of threshold {name} = {value}")]
    ThresholdAmbiguity { c: f64, name: &'static str, value: f64 },
    #[error("operation not defined for case {0}")]
    WrongCase(String),
    #[error("evaluation point {0} too close to the switch point")]
    StencilTooCoarse(f64),
    #[error("path {path} left the state space at t = {t}")]
    StateEscapedDomain { path: u64, t: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
