use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_QUERY_CAP;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_ratio: f64,
    /// Decoupled weight decay; zero by default.
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_query_cap: usize,
    pub context_ratio_range: (f64, f64),
    /// Emit a checkpoint every this many epochs (the last epoch always emits).
    pub checkpoint_every: usize,
    /// Also emit the untrained model as a step-0 checkpoint.
    pub initial_checkpoint: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            lr: 2e-4,
            warmup_ratio: 0.05,
            weight_decay: 0.0,
            epochs: 200,
            batch_query_cap: DEFAULT_QUERY_CAP,
            context_ratio_range: (0.2, 0.5),
            checkpoint_every: 20,
            initial_checkpoint: false,
            seed: 0,
        }
    }

    pub fn paper() -> Self {
        Self {
            epochs: 20_000,
            checkpoint_every: 1000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.context_ratio_range;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1.0) {
            return Err(Error::Config(format!("warmup_ratio must lie in (0, 1), got {}", self.warmup_ratio)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::Config(format!("context ratio range {:?} must satisfy 0 < lo <= hi < 1", (lo, hi))));
        }
        if self.batch_query_cap == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("batch_query_cap and checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}
