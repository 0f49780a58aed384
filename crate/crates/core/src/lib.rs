//! Capsule-network text classification: compositional-code word embeddings,
//! a bidirectional GRU feature extractor and a fully connected capsule layer
//! aggregated by k-means routing.
//!
//! Everything runs on the small reverse-mode autodiff engine in [`tensor`];
//! no layer hand-writes its end-to-end gradient.

pub mod checkpoint;
pub mod data;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod gru;
pub mod loss;
pub mod model;
pub mod optim;
pub mod routing;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
