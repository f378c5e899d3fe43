//! Network layers and the five-layer classifier.
//!
//! Layer order: conv1 -> bn1 -> tanh -> conv2 -> bn2 -> tanh -> flatten ->
//! fc1 (tanh) -> fc2 (tanh) -> out -> softmax cross-entropy. Both conv layers
//! run either aligned ([`ConvMode::Dwa`]) or conventional
//! ([`ConvMode::Linear`]).

pub mod batchnorm;
pub mod conv;
pub mod dense;
mod model;

pub use batchnorm::{BatchNorm, BnCache, BnGrads, Mode};
pub use conv::{
    aligned_conv_forward, dwa_conv_backward, dwa_conv_forward, linear_conv_backward,
    linear_conv_forward, output_len, ConvFilterBank, ConvGrads, ConvMode, ConvTrace,
};
pub use dense::{softmax, softmax_cross_entropy, Activation, Dense, DenseGrads, LossOutput};
pub use model::{
    ConvGeometry, ForwardTrace, Gradients, ModelGeometry, ModelState, ParamGroup, PassOptions,
    SampleAlignment, ShapeChain,
};
