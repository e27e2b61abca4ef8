//! Minimal convolutional network core: layer graph, traced forward pass,
//! backward pass and the on-disk model format.

mod arch;
mod backward;
mod forward;
mod io;
mod layer;
mod model;
pub(crate) mod ops;

pub use arch::{reference_model, ArchConfig, Head};
pub use backward::{backward, backward_with, BackwardOptions, Gradients, ParamGrad};
pub use forward::{forward, predict, softmax_probs, ForwardOutput, ForwardTrace};
pub(crate) use forward::conv_geom;
pub use io::{decode_model, encode_model, load_model, save_model, BlobRange, LayerRecord, ModelManifest, MODEL_MAGIC};
pub use layer::{Layer, LayerKind, INPUT};
pub use model::{Model, ModelBuilder, ModelMeta, Source};
