use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid block layout: {0}")]
    Layout(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("block `{label}` is not symmetric positive definite")]
    NotSpd { label: String },

    #[error("value {value} at index {index} exceeds magnitude bound {bound}")]
    Range { index: usize, value: f64, bound: f64 },

    #[error("conjugate gradients did not converge in block `{label}` after {iterations} iterations (relative residual {residual:e})")]
    Convergence {
        label: String,
        iterations: usize,
        residual: f64,
    },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("mask feasibility violated at coordinate {index}: residue {residue:e} exceeds 1e-9")]
    Feasibility { index: usize, residue: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("digest mismatch for {what}: expected {expected}, found {found}")]
    DigestMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("malformed artifact {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("witness does not satisfy the certificate circuit: {0}")]
    Unsatisfied(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by numerics rather than bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotSpd { .. }
                | Error::Convergence { .. }
                | Error::Divergence { .. }
                | Error::Feasibility { .. }
                | Error::Numeric(_)
                | Error::Range { .. }
        )
    }
}
