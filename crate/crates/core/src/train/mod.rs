//! Mini-batch training: configuration, Adam, dropout, class-capped sampling
//! and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod dropout;
mod sampling;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, adam_update, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use dropout::{apply_dropout, Mode};
pub use sampling::{sample_training_set, LabelSplit, SamplingReport};
pub use trainer::{evaluate_examples, predict, train_from, train_model, EpochLog, Example};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    /// Maximum documents sampled per label; `None` keeps everything.
    pub per_class_cap: Option<usize>,
    /// `[train, test]` parts of the stratified split.
    pub split: [usize; 2],
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 10,
            dropout_rate: 0.2,
            per_class_cap: Some(150_000),
            split: [9, 1],
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.split[0] + self.split[1] == 0 || self.split[0] == 0 {
            return Err(Error::Config("split needs a nonzero training part".into()));
        }
        if self.per_class_cap == Some(0) {
            return Err(Error::Config("per_class_cap must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }

    pub fn test_fraction(&self) -> f64 {
        self.split[1] as f64 / (self.split[0] + self.split[1]) as f64
    }
}
