//! Source pretraining, target adaptation and evaluation.

mod fit;
mod optim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{
    adapt, evaluate, prepare_registry, pretrain_source, AdaptResult, EpochStats, TrainData,
};
pub use optim::{adam_step, adam_update, AdamState, Moments, BETA1, BETA2, EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Learning rate.
    pub eta: f64,
    /// Decoupled weight decay.
    pub lambda: f64,
    pub batch: usize,
    /// Class-balance parameter.
    pub beta: f64,
    /// Prompt length; ignored by no-prompt regimes.
    pub n_p: usize,
    pub epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            eta: 3e-3,
            lambda: 1e-4,
            batch: 8,
            beta: 0.999,
            n_p: 5,
            epochs: 100,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(
                "eta",
                format!("must be positive, got {}", self.eta),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(
                "lambda",
                format!("must be >= 0, got {}", self.lambda),
            ));
        }
        if self.batch == 0 {
            return Err(Error::config("batch", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::config(
                "beta",
                format!("must lie in [0, 1), got {}", self.beta),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        Ok(())
    }
}
