use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Fock dimension {0}: cutoff must be at least 2")]
    InvalidDimension(usize),

    #[error("truncation inadequate: dim {dim} is below the required {suggested}")]
    Truncation { dim: usize, suggested: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },

    #[error("steady-state solve failed, residual {residual:e}")]
    SolverFailure { residual: f64 },

    #[error("time integration failed after t = {last_good_time:e} s")]
    Integration { last_good_time: f64 },

    #[error("phase undefined for a vacuum-dominated state (<n> = {0:e})")]
    UndefinedPhase(f64),

    #[error("phase-space grid does not cover the state (edge |W|/max W = {ratio:e}); try half-width {suggested_half_width:.3}")]
    Grid { ratio: f64, suggested_half_width: f64 },

    #[error("phase-space grid too coarse: {0}")]
    Resolution(String),

    #[error("transmission minimum at grid edge (index {index} of {len})")]
    Bracketing { index: usize, len: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("backend failed at frequency index {index}: {source}")]
    Backend {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid_dimension",
            Error::Truncation { .. } => "truncation",
            Error::Domain(_) => "domain",
            Error::Shape { .. } => "shape",
            Error::SolverFailure { .. } => "solver_failure",
            Error::Integration { .. } => "integration",
            Error::UndefinedPhase(_) => "undefined_phase",
            Error::Grid { .. } => "grid",
            Error::Resolution(_) => "resolution",
            Error::Bracketing { .. } => "bracketing",
            Error::Calibration(_) => "calibration",
            Error::Backend { .. } => "backend",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
