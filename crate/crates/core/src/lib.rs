//! Prompt tuning for test-time domain adaptation of audio deepfake
//! detectors, at desk scale.
//!
//! A miniature transformer detector is pretrained on a synthetic source
//! domain and then adapted to a labeled target domain by tuning a short
//! prompt prepended to the encoder input, optionally together with the final
//! linear layer (mode B) or all weights (mode C).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod experiments;
pub mod hpo;
mod io;
mod label;
pub mod lossmetrics;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
pub use label::Label;
