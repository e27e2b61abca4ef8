//! Pixel-wise relevance propagation for small convolutional networks, with
//! cell-level heatmap evaluation and synthetic bias experiments.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod datagen;
pub mod explain;
pub mod heatmap;
pub mod imaging;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
