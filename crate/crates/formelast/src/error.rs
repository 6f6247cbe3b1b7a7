//! Error type shared by every module.

use thiserror::Error;

/// Failures raised by grid construction, field algebra, and time stepping.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid chart, grid, scenario, or model parameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// Field shapes or resolutions that do not fit together.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Operands living in different representations (or over different maps).
    #[error("representation mismatch: {0}")]
    Representation(String),
    /// Form degree outside the range an operation accepts.
    #[error("degree error: {0}")]
    Degree(String),
    /// Operation not defined for the given input.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Embedding that reverses orientation (det F <= 0) at a node.
    #[error("orientation error at node {node}: det F = {det:e}")]
    Orientation { node: usize, det: f64 },
    /// Metric that is not symmetric positive definite at a node.
    #[error("metric is not SPD at node {node} (min eigenvalue {min_eig:e})")]
    NotSpd { node: usize, min_eig: f64 },
    /// Zero or negative density where a division by it is required.
    #[error("degenerate density at node {node}: {value:e}")]
    Degenerate { node: usize, value: f64 },
    /// Element inversion during time stepping.
    #[error("inverted element at step {step}, node {node}")]
    Inverted { step: usize, node: usize },
    /// Energy blow-up during time stepping.
    #[error("instability at step {step}: energy {energy:e} exceeds 10x initial {initial:e}")]
    Instability { step: usize, energy: f64, initial: f64 },
    /// Not enough time snapshots for a finite difference in time.
    #[error("insufficient snapshots: {0}")]
    Snapshots(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
