//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A generator is not an isometry of its charts, or is otherwise malformed.
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    /// Group closure exceeded the configured bound.
    #[error("unsupported holonomy: group closure exceeded {0} elements")]
    UnsupportedHolonomy(usize),

    /// An operation received a cochain of the wrong degree.
    #[error("degree error: expected {expected}, got {got}")]
    DegreeError { expected: usize, got: usize },

    /// Mismatched cochain value types or layouts.
    #[error("type error: {0}")]
    TypeError(String),

    /// A quantity that must be pseudogroup-invariant is not.
    #[error("invariance error: {0} (residual {residual:.3e})", residual = .1)]
    InvarianceError(String, f64),

    /// A requested field is incompatible with the pseudogroup.
    #[error("equivariance error: {0}")]
    EquivarianceError(String),

    /// Principal matrix logarithm hit the branch cut (plaquette trace near -2).
    #[error("branch cut at chart {chart}, face {cell}: trace {trace:.6}")]
    BranchCutError { chart: usize, cell: usize, trace: f64 },

    /// A metric perturbation is not admissible.
    #[error("perturbation error: {0}")]
    PerturbationError(String),

    /// A foliation cycle with non-positive multiplicities has no mass.
    #[error("invalid cycle: {0}")]
    InvalidCycle(String),

    /// Malformed or mismatched input file.
    #[error("bad input: {0}")]
    BadInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
