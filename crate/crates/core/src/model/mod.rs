//! The detector: a Front-End (convolutional token extractor and transformer
//! encoder) feeding a Back-End (pooled hidden layer and final linear layer),
//! with an optional prompt prepended to the encoder input.

pub mod checkpoint;
mod config;
mod network;
mod registry;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{ConvLayer, ModelConfig};
pub use network::{build_model, Bound, Logits, Network, ParamGrads, Stage};
pub use registry::{
    count_params, init_prompt, inject_prompt, trainable_params, Param, ParamCount, ParamGroup,
    ParamRegistry, Prompt, Regime, TrainableSet, TuningMode,
};
