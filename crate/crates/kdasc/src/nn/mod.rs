//! Minimal deterministic tensor and neural-network engine.

pub mod adam;
pub mod layers;
pub mod loss;
pub mod mixup;
pub mod network;
pub mod tensor;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use layers::{LayerSpec, Mode};
pub use loss::{cross_entropy, mse};
pub use mixup::{mixup, MixupPair, DEFAULT_MIXUP_ALPHA};
pub use network::{Layer, Network};
pub use tensor::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Beta(alpha, alpha) mixup; None disables mixup.
    pub mixup_alpha: Option<f64>,
    /// (w_ce, w_mse); the distillation ratio defaults to 1:1.
    pub loss_weights: (f64, f64),
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            mixup_alpha: Some(DEFAULT_MIXUP_ALPHA),
            loss_weights: (1.0, 1.0),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.loss_weights.0 == 0.0 && self.loss_weights.1 == 0.0 {
            return Err(Error::Config("loss weights may not both be zero".into()));
        }
        if self.loss_weights.0 < 0.0 || self.loss_weights.1 < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, ..self.adam }
    }
}
