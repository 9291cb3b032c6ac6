//! Distribution-based statistical loss for discriminative feature
//! learning.
//!
//! Each class in a labeled dataset is treated as a multivariate
//! distribution. The loss couples two terms: the mean per-class covariance
//! trace, which shrinks intra-class spread, and a diversity penalty built
//! from the two-sample Hotelling T-squared statistic, which pushes class
//! distributions apart. The crate provides the batch statistics, the loss
//! and its per-sample gradients (published closed form and a
//! finite-difference exact mode), a small feed-forward classifier trained
//! jointly with softmax cross-entropy, dataset plumbing, and the usual
//! classification metrics.

pub mod class_stats;
pub mod data;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
