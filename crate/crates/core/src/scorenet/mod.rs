//! Causal score network and its reverse-mode gradients.
//!
//! Feature maps are `[channels, frames, bins]`. Every layer reads only
//! current and past frames, so processing a prefix of the input gives
//! the same leading output frames as processing the whole input.

mod checkpoint;
mod config;
pub mod conv;
pub mod freq;
pub mod graph;
mod model;
pub mod norm;
mod tensor;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use config::ScoreNetConfig;
pub use conv::{causal_conv2d, time_conv_transpose, ConvGeom};
pub use freq::{freq_resample, Direction};
pub use graph::Var;
pub use model::{
    gradients, prior_score, stack_input, unstack_output, NetScore, ParamSpec, ParamTensors, ParamVars,
    ScoreNet, ScoreNetParams, FOURIER_FREQS,
};
pub use norm::{cumulative_group_norm, NORM_EPS};
pub use tensor::Tensor;
