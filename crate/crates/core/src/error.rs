//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("initial data is not admissible (min f = {min_f:e}, rho in [{min_rho:e}, {max_rho:e}])")]
    AdmissibilityViolation { min_f: f64, min_rho: f64, max_rho: f64 },

    #[error("numerical blowup at step {step} (t = {t}): {reason}")]
    NumericalBlowup { step: usize, t: f64, reason: String },

    #[error("rescaling radius {r} violates 0 < r < min(1, sqrt(t0/2)) with t0 = {t0}")]
    RadiusTooLarge { r: f64, t0: f64 },

    #[error("Peclet number is zero; the rescaling map is undefined")]
    ZeroPeclet,

    #[error("analysis window holds {got} snapshots, need at least {need}")]
    WindowTooShort { got: usize, need: usize },

    #[error("field has negative entry {value:e} at flat index {index}")]
    NegativeField { index: usize, value: f64 },

    #[error("need at least {need} snapshots, got {got}")]
    TooFewSnapshots { got: usize, need: usize },

    #[error("series value {value:e} at t = {t} is not positive")]
    NonpositiveValue { t: f64, value: f64 },

    #[error("need at least {need} points in the fit window, got {got}")]
    TooFewPoints { got: usize, need: usize },

    #[error("spatial-average deviation {deviation:e} is below 1e-14 at the first snapshot")]
    DegenerateDeviation { deviation: f64 },

    #[error("not converged by t = {t_max}: residual {residual:e}")]
    NotConverged { t_max: f64, residual: f64 },

    #[error("power iteration stalled after {iterations} iterations")]
    IterationStall { iterations: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error in `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("checkpoint refused: {0}")]
    CheckpointMismatch(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidParams { .. } => "InvalidParams",
            Error::NonFinite { .. } => "NonFinite",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::AdmissibilityViolation { .. } => "AdmissibilityViolation",
            Error::NumericalBlowup { .. } => "NumericalBlowup",
            Error::RadiusTooLarge { .. } => "RadiusTooLarge",
            Error::ZeroPeclet => "ZeroPeclet",
            Error::WindowTooShort { .. } => "WindowTooShort",
            Error::NegativeField { .. } => "NegativeField",
            Error::TooFewSnapshots { .. } => "TooFewSnapshots",
            Error::NonpositiveValue { .. } => "NonpositiveValue",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::DegenerateDeviation { .. } => "DegenerateDeviation",
            Error::NotConverged { .. } => "NotConverged",
            Error::IterationStall { .. } => "IterationStall",
            Error::Parse(_) => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::CheckpointMismatch(_) => "CheckpointMismatch",
            Error::Snapshot(_) => "SnapshotError",
            Error::Io(_) => "IoError",
        }
    }
}
