//! Error type shared by every module of the lab.

use thiserror::Error;

/// Everything that can go wrong while building, running or checking an experiment.
#[derive(Debug, Error)]
pub enum LabError {
    /// Grid construction parameters out of range.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Two fields defined on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A weighted quadrature summand left the representable range.
    #[error("weighted quadrature overflow at node {node} (log-magnitude {log_magnitude:.3})")]
    Overflow { node: usize, log_magnitude: f64 },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A time change was not strictly increasing or did not start at zero.
    #[error("time change is not admissible: {0}")]
    NonMonotoneClock(String),

    /// The iterative linear solve did not reach its residual target.
    #[error("linear solve did not converge after {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    /// A scalar parameter violates its precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The experiment configuration is inconsistent or violates a check precondition.
    #[error("configuration error: {0}")]
    Config(String),

    /// An ensemble path failed; the seed is recorded for replay.
    #[error("path {index} (seed {seed:#018x}) failed: {source}")]
    PathFailed {
        index: usize,
        seed: u64,
        #[source]
        source: Box<LabError>,
    },

    /// A moment needed as a divisor vanished.
    #[error("vanishing moment: {0}")]
    Vanishing(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
