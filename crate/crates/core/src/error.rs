use thiserror::Error;

/// Errors raised by the numerical core.
///
/// Scalar payloads are stored as `f64` regardless of the scalar type in use.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BridgeError {
    #[error("time {t} outside (0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("degenerate coefficient {what} at t = {t}")]
    DegenerateCoefficient { what: &'static str, t: f64 },

    #[error("lambda {lambda} not attainable on [{lo}, {hi}] (range {lambda_hi} .. {lambda_lo})")]
    NotBracketed {
        lambda: f64,
        lo: f64,
        hi: f64,
        lambda_lo: f64,
        lambda_hi: f64,
    },

    #[error("invalid grid parameters: {0}")]
    InvalidGridParams(String),

    #[error("invalid schedule parameters: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("initial-step singularity: c(t_next) = 0 at t_next = {t_next} with rho below c(t_n)")]
    InitialStepSingularity { t_next: f64 },

    #[error("rho is zero; quantity undefined")]
    ZeroRho,

    #[error("linear system b^2 S + c^2 I is singular at t = {t}")]
    SingularSystem { t: f64 },

    #[error("non-positive step h = {h}")]
    NonpositiveStep { h: f64 },

    #[error("zero vector passed to spherical interpolation")]
    ZeroVector,

    #[error("covariance is singular or not positive definite")]
    SingularCovariance,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("encoding inconsistent: relative residual {residual} at step {step}")]
    EncodingInconsistent { residual: f64, step: usize },
}

pub type Result<T> = std::result::Result<T, BridgeError>;
