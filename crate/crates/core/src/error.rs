use thiserror::Error;

/// Errors raised by the flow laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcfError {
    #[error("discrete Hessian is not positive semidefinite at {location} (min eigenvalue {min_eig:.3e}, tolerance {tol:.3e})")]
    NonConvex {
        location: String,
        min_eig: f64,
        tol: f64,
    },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("region contains no evaluable points")]
    EmptyRegion,
    #[error("curvature blow-up: max K = {max_k:.3e} at t = {t:.6}")]
    CurvatureBlowup { max_k: f64, t: f64 },
    #[error("time {t} is past the extinction time {extinction}")]
    PastExtinction { t: f64, extinction: f64 },
    #[error("grid radius {r_max} does not fit inside the sphere of radius {radius}")]
    GridTooWide { r_max: f64, radius: f64 },
    #[error("no blow-up detected within r_max = {r_max} although alpha = {alpha} > 1/2")]
    NoBlowupDetected { r_max: f64, alpha: f64 },
    #[error("ODE integration stalled at r = {r:.6e} (step size {step:.3e})")]
    StiffnessFailure { r: f64, step: f64 },
    #[error("chart matrix is singular or badly conditioned (smallest singular value {sigma_min:.3e})")]
    SingularChart { sigma_min: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point outside the barrier domain: {0}")]
    OutOfDomain(String),
    #[error("invalid barrier parameters: {0}")]
    InvalidSpec(String),
    #[error("trace never reaches the slab [{lo}, {hi}] (max height {max_height})")]
    TraceDoesNotReachSlab { lo: f64, hi: f64, max_height: f64 },
    #[error("trace has no snapshot at t = 0")]
    MissingInitialSnapshot,
    #[error("need at least {needed} snapshots, trace has {got}")]
    InsufficientSnapshots { needed: usize, got: usize },
    #[error("operation requires a radial trace")]
    NonRadialTrace,
    #[error("graph never reaches the level {level} (max height {max_height})")]
    GraphBelowLevel { level: f64, max_height: f64 },
    #[error("lower half does not cover x = {x}")]
    ResampleGap { x: f64 },
    #[error("serialization error: {0}")]
    Serialization(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, GcfError>;

impl From<serde_json::Error> for GcfError {
    fn from(e: serde_json::Error) -> Self {
        GcfError::Serialization(e.to_string())
    }
}

impl From<std::io::Error> for GcfError {
    fn from(e: std::io::Error) -> Self {
        GcfError::Io(e.to_string())
    }
}
