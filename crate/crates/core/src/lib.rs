//! Supervised deep metric learning in a pairwise similarity space ("S-space").
//!
//! An autoencoder maps rows to latent vectors; a pair of rows is represented by the
//! element-wise absolute difference of their latent vectors. Learnable positive and
//! negative markers in that space score each pair through a Student-t kernel, and the
//! positive share is the probability that the two rows share a label.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below name
//! the common instantiations.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod export;
pub mod kernel;
pub mod kmeans;
pub mod nn;
pub mod objective;
pub mod report;
pub mod scalar;
pub mod theory;
pub mod trainer;

pub use error::{Result, SmellError};
pub use scalar::Scalar;

pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Autoencoder64 = nn::Autoencoder<f64>;
pub type Autoencoder32 = nn::Autoencoder<f32>;
pub type MarkerSet64 = kernel::MarkerSet<f64>;
pub type MarkerSet32 = kernel::MarkerSet<f32>;
pub type TrainedModel64 = trainer::TrainedModel<f64>;
pub type TrainedModel32 = trainer::TrainedModel<f32>;
