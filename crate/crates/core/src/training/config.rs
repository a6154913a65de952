use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization settings shared by pretraining, fine-tuning, and
/// from-scratch runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_snr_db: f64,
    pub total_power: f64,
    /// Number of leading layers held fixed.
    pub freeze_prefix: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            epochs: 20,
            batch_size: 512,
            train_snr_db: 10.0,
            total_power: 1.0,
            freeze_prefix: 0,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Check ranges; `num_layers` bounds the freeze prefix.
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", format!("must be > 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1".into());
        }
        if !self.train_snr_db.is_finite() {
            return bad("train_snr_db", "must be finite".into());
        }
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return bad("total_power", format!("must be > 0, got {}", self.total_power));
        }
        if self.freeze_prefix > num_layers {
            return bad(
                "freeze_prefix",
                format!("must be in 0..={num_layers}, got {}", self.freeze_prefix),
            );
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta1", "betas must lie in [0, 1)".into());
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps", "must be > 0".into());
        }
        Ok(())
    }
}
