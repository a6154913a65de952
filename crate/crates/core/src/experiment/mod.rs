//! Config-driven experiment runs: data preparation, pretraining,
//! fine-tuning, from-scratch baselines, SNR sweeps, and CSV metrics.

mod config;
mod data;
mod metrics;
mod run;

pub use config::{
    parse_config, parse_config_str, DatasetKind, DatasetSpec, ExperimentConfig, FinetuneConfig, Method, ModelConfig,
    Scenario,
};
pub use data::{measured_samples, prepare_dataset, sub_seed, PreparedData, DEFAULT_MEASURED_TUPLES};
pub use metrics::{
    evaluate, export_csv, load_records, mean_std, metrics_csv, save_records, MetricsRecord, Precoder, METRICS_HEADER,
};
pub use run::{run_experiment, run_freeze_sweep, CheckpointEntry, RunManifest, RunOptions, Session};
