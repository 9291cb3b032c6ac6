//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors raised by statistics, loss, model, data and metric routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A symmetric matrix failed Cholesky factorization (pivot at or below
    /// the 1e-14 threshold). Callers should retry with a larger ridge.
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("dimension mismatch: {context} (expected {expected}, found {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("class {class_id} has no samples")]
    EmptyClass { class_id: usize },

    /// A statistic dividing by n_k - 1 was asked for a class with fewer
    /// than two samples.
    #[error("class {class_id} has {count} sample(s); at least 2 are required")]
    DegenerateClass { class_id: usize, count: usize },

    #[error("invalid label {label}: must be below {num_classes}")]
    InvalidLabel { label: usize, num_classes: usize },

    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("confusion matrix has no counts")]
    EmptyMatrix,

    /// Chance agreement p_e = 1 with imperfect observed agreement: kappa
    /// is undefined.
    #[error("kappa undefined: chance agreement is 1 but observed agreement is {observed}")]
    DegenerateKappa { observed: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ragged row at line {line}: expected {expected} features, found {found}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("file contains no data rows")]
    EmptyFile,

    #[error("band cube contains no labeled pixels")]
    NoLabeledPixels,

    #[error("class {class_id} has {have} samples but {need} were requested")]
    InsufficientClassSamples {
        class_id: usize,
        have: usize,
        need: usize,
    },

    #[error("batch size {batch_size} is too small for {num_classes} classes (need at least {})", 2 * num_classes)]
    BatchTooSmall {
        batch_size: usize,
        num_classes: usize,
    },

    #[error("invalid network dims: {reason}")]
    InvalidDims { reason: String },

    #[error("degenerate batch: {reason}")]
    DegenerateBatch { reason: String },

    #[error("checkpoint format error: {message}")]
    Checkpoint { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
