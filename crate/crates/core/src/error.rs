use thiserror::Error;

/// Errors raised by the geometry, solver, diagnostics and runner layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("root finding did not converge after {iterations} iterations (target {target})")]
    Convergence { iterations: usize, target: f64 },

    #[error("metric is not Lorentzian at r = {r}: g00 = {g00}, grr = {grr}")]
    LorentzianBreakdown { r: f64, g00: f64, grr: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("slice out of range: {0}")]
    SliceOutOfRange(String),

    #[error("slice leaves the trusted region at t = {t}, r = {r}")]
    MaskViolation { t: f64, r: f64 },

    #[error("need at least {needed} snapshots around t = {t}, have {have}")]
    InsufficientSnapshots { needed: usize, have: usize, t: f64 },

    #[error("inequality probe falsified: {0}")]
    ProbeFalsified(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
