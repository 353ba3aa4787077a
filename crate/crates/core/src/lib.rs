//! Label-free ranking of embedding models.
//!
//! Given several embedders evaluated on one shared corpus, the crate
//! estimates how well each embedding can simulate every other one
//! (information sufficiency, a cross-entropy reduction under Gaussian-mixture
//! density classes), aggregates the pairwise matrix into a per-embedder
//! score, clusters embedders on the resulting directed graph, and correlates
//! scores with downstream probe performance. A finite-alphabet module
//! computes deficiency, sufficiency and Bayes risk exactly for small discrete
//! channels.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which every pipeline entry point uses.

#![allow(clippy::needless_range_loop)]

pub mod channel;
pub mod data;
pub mod density;
pub mod error;
pub mod graph;
pub mod infosuff;
pub mod nn;
pub mod num;
pub mod pipeline;
pub mod probe;
pub mod rng;
pub mod serial;
pub mod stats;

pub use error::{Error, Result};
pub use num::Scalar;

pub type Embeddings = data::EmbeddingMatrix<f64>;
pub type Mixture = density::GaussianMixtureParams<f64>;
pub type Kernel = density::KernelNetwork<f64>;


pub type Channel = channel::DiscreteChannel<f64>;
pub type Task = channel::DiscreteTask<f64>;
