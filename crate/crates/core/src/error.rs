use num_complex::Complex64;
use thiserror::Error;

/// Errors raised across the simulation engines.
#[derive(Debug, Error)]
pub enum Error {
    /// An evaluation came closer to a phase-space pole than the configured floor.
    #[error("phase-space singularity: |{quantity}| = {magnitude:e} is below the pole floor")]
    Singularity {
        quantity: &'static str,
        magnitude: f64,
    },

    #[error("target {target} is not in the image of h for this basis family")]
    UnreachableTarget { target: Complex64 },

    #[error("initial population rho11 = {rho11} must lie strictly inside (0, 1)")]
    BoundaryPopulation { rho11: f64 },

    #[error("atomic density is not positive semidefinite (coherence weight q = {q} > 1)")]
    PositivityViolation { q: f64 },

    #[error("invalid atomic density: {0}")]
    InvalidDensity(String),

    #[error("inconsistent physical state: 2 rho21 / (1 - nu) = {from_rho21} but (1 + nu) / (2 rho12) = {from_rho12}")]
    InconsistentState {
        from_rho21: Complex64,
        from_rho12: Complex64,
    },

    #[error("basis family {0} is not supported here")]
    UnsupportedFamily(&'static str),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("all {runs} paths diverged")]
    AllPathsDiverged { runs: usize },

    #[error("Hilbert-space dimension {dim} exceeds the cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("trace drifted to {trace} at t = {t}; reduce the step or raise the photon cutoff")]
    TraceDrift { t: f64, trace: f64 },

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
