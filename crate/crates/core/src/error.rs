use thiserror::Error;

use crate::model::Profile;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("profile grid does not match the model grid")]
    GridMismatch,

    #[error("the high-kappa energy needs a normal-core reference on the same grid")]
    MissingReference,

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Box<Profile>,
        history: Vec<f64>,
    },

    #[error("energy increased by {increase:.3e} at flow step {step}")]
    StabilityViolation { step: usize, increase: f64 },

    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("eigen iteration failed: {0}")]
    EigenFailure(String),

    #[error("insufficient points: need {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("tail is below 1e-14 across the fit window")]
    DegenerateTail,

    #[error("{0} must be positive at every interior node")]
    NonPositive(&'static str),

    #[error("rho = {rho} outside [2, sqrt(r_max)]")]
    RhoOutOfRange { rho: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
