//! CPU tensor and layer core for 1-D and 2-D convolutional networks.
//!
//! Layout is `[n, c, len]` for signals and `[n, c, h, w]` for images. A 1-D
//! layer is executed as the 2-D layer over a height-1 plane. Backward passes
//! are hand-written and verified against central finite differences by
//! [`gradcheck`].

mod activation;
mod conv;
mod dropout;
mod fc;
pub mod gradcheck;
mod loss;
mod network;
mod pool;
mod profile;
mod scalar;
mod tensor;

pub use activation::{activation_backward, activation_forward, ActivationKind, SELU_ALPHA, SELU_LAMBDA};
pub use conv::conv_forward;
pub use dropout::dropout;
pub use fc::fc_forward;
pub use loss::{softmax_xent, softmax_xent_batch};
pub use network::{ForwardPass, Gradients, InitScheme, Network, ParamGrad, ParamLayer};
pub use pool::{maxpool_backward, maxpool_forward};
pub use profile::{infer_shapes, ArchitectureProfile, Dimensionality, LayerSpec, ShapeEntry, ShapeTable};
pub use scalar::Scalar;
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// Dropout is active only in `Train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Eval,
}
