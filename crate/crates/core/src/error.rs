//! Error type shared by the whole crate.

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("{op}: dimension mismatch, left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    DimensionMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// An operation received an empty matrix, vector or sample set.
    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    /// A value that must be finite was NaN or infinite.
    #[error("{context}: non-finite value encountered")]
    NonFinite { context: &'static str },

    /// A vector that must have positive norm was (numerically) zero.
    #[error("{context}: zero-norm input{}", index.map(|i| format!(" at sample {i}")).unwrap_or_default())]
    ZeroNorm {
        context: &'static str,
        index: Option<usize>,
    },

    /// A matrix that must be symmetric was not, beyond tolerance.
    #[error("matrix is not symmetric: max |a_ij - a_ji| = {max_asymmetry}")]
    NotSymmetric { max_asymmetry: f64 },

    /// Eigen-iteration failed to converge within the sweep limit.
    #[error("eigendecomposition did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    /// Requested more components / samples / units than are available.
    #[error("{context}: requested {requested}, only {available} available")]
    NotEnough {
        context: &'static str,
        requested: usize,
        available: usize,
    },

    /// Input does not match the model's declared input layout.
    #[error("input layout mismatch: expected {expected} values, got {got}")]
    LayoutMismatch { expected: usize, got: usize },

    /// A model produced no usable activation (all outputs ~ zero).
    #[error("degenerate model: all class activations at or below {threshold}")]
    DegenerateModel { threshold: f64 },

    /// Training produced a non-finite update and was aborted.
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// A dataset or checkpoint file failed to parse.
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Helper for file-format errors.
    pub fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
