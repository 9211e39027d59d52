//! Sensor-constrained maintenance binning for turbofan run-to-failure data.
//!
//! The crate trains a small ReLU regressor for remaining useful life, explains
//! it with Shapley values, ranks sensors, embeds raw features or attributions
//! into two dimensions, soft-clusters the embedding with fuzzy c-means and
//! scores the clusters against maintenance-bin ground truth.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster_validation;
pub mod cmapss_io;
pub mod error;
pub mod fuzzy_cmeans;
pub mod manifold;
pub mod matrix;
pub mod pipeline;
pub mod rul_net;
pub mod shapley;
pub mod surrogate;

pub use error::{Error, Result};
pub use matrix::Matrix;
