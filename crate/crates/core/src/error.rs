use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("torus correction requires a rectangular window")]
    TorusUnsupported,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("simulation failure: {0}")]
    Simulation(String),

    #[error("point ({x}, {y}) lies outside the field coverage")]
    OutOfRange { x: f64, y: f64 },

    #[error("grid geometry mismatch: {0}")]
    Geometry(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("insufficient points: {0}")]
    InsufficientPoints(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("variogram fit failed: {0}")]
    FitFailure(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("replicate {replicate}: no admissible shift after {redraws} redraws")]
    DegenerateShift { replicate: usize, redraws: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Simulation(_)
            | Error::Numeric(_)
            | Error::FitFailure(_)
            | Error::Estimation(_)
            | Error::DegenerateShift { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    /// Short stable tag printed in front of error messages.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidWindow(_) => "invalid-window",
            Error::TorusUnsupported => "torus-unsupported",
            Error::Domain(_) => "domain",
            Error::Simulation(_) => "simulation-failure",
            Error::OutOfRange { .. } => "out-of-range",
            Error::Geometry(_) => "geometry",
            Error::Model(_) => "model",
            Error::InsufficientPoints(_) => "insufficient-points",
            Error::DegenerateSample(_) => "degenerate-sample",
            Error::FitFailure(_) => "fit-failure",
            Error::Estimation(_) => "estimation",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::DegenerateShift { .. } => "degenerate-shift",
            Error::Numeric(_) => "numeric",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::StaleCache(_) => "stale-cache",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
