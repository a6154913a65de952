//! Unsupervised sum-rate training, Adam, and layer-freezing fine-tuning.

mod adam;
mod config;
mod freeze;
mod objective;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use freeze::{freeze_layers, TrainabilityMask};
pub use objective::{gradients, loss, loss_and_gradients, rate_and_gradient, GradientSet};
pub use trainer::{fine_tune, input_scale_for, mean_sum_rate, train, EpochRecord, TrainHistory};
