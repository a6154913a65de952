//! Experiment configuration documents (TOML).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::PathLossParams;
use crate::dataset::{SyntheticConfig, DEFAULT_FRACTIONS};
use crate::error::{Error, Result};
use crate::gnn::{Aggregation, DEFAULT_HIDDEN_WIDTH, DEFAULT_LEAKY_SLOPE, NUM_LAYERS};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cb,
    Zf,
    GnnPretrained,
    GnnFinetuned,
    GnnScratch,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Cb,
        Method::Zf,
        Method::GnnPretrained,
        Method::GnnFinetuned,
        Method::GnnScratch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cb => "cb",
            Method::Zf => "zf",
            Method::GnnPretrained => "gnn_pretrained",
            Method::GnnFinetuned => "gnn_finetuned",
            Method::GnnScratch => "gnn_scratch",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::GnnPretrained | Method::GnnFinetuned | Method::GnnScratch)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub users: usize,
    pub aps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Generated from the path-loss and fading model.
    #[default]
    Synthetic,
    /// Per-position CSI table, combined into multi-user samples.
    Measured,
    /// Ready-made multi-user channel set.
    ChannelSet,
}

/// Where channels come from and how they are split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub path: Option<PathBuf>,
    /// Synthetic sample count.
    pub count: usize,
    pub area_side_m: f64,
    pub path_loss: PathLossParams,
    /// Multiplier applied to measured coefficients on load.
    pub unit_scale: f64,
    /// Strongest positions kept before drawing tuples of more than two users.
    pub top_k: Option<usize>,
    /// Cap on multi-user samples drawn from measurements.
    pub max_samples: Option<usize>,
    pub fractions: [f64; 3],
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Synthetic,
            path: None,
            count: 2000,
            area_side_m: 10.0,
            path_loss: PathLossParams::default(),
            unit_scale: 1.0,
            top_k: None,
            max_samples: None,
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

impl DatasetSpec {
    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            area_side_m: self.area_side_m,
            path_loss: self.path_loss,
        }
    }

    fn validate(&self, section: &str, users: usize) -> Result<()> {
        let key = |k: &str| format!("{section}.{k}");
        match self.kind {
            DatasetKind::Synthetic => {
                if self.count < 3 {
                    return Err(Error::config(key("count"), "need at least 3 samples to split"));
                }
                if !(self.area_side_m > 0.0 && self.area_side_m.is_finite()) {
                    return Err(Error::config(key("area_side_m"), "must be > 0"));
                }
                self.path_loss
                    .validate()
                    .map_err(|e| Error::config(key("path_loss"), e.to_string()))?;
            }
            DatasetKind::Measured | DatasetKind::ChannelSet => {
                if self.path.is_none() {
                    return Err(Error::config(key("path"), "required for this dataset kind"));
                }
            }
        }
        if !(self.unit_scale > 0.0 && self.unit_scale.is_finite()) {
            return Err(Error::config(key("unit_scale"), "must be > 0"));
        }
        if self.top_k.is_some_and(|k| k < users) {
            return Err(Error::config(key("top_k"), format!("must be >= users ({users})")));
        }
        if self.max_samples == Some(0) {
            return Err(Error::config(key("max_samples"), "must be >= 1"));
        }
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f))
            || (self.fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::config(key("fractions"), "must lie in [0, 1] and sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_width: usize,
    pub leaky_slope: f64,
    pub aggregation: Aggregation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            aggregation: Aggregation::Inclusive,
        }
    }
}

/// Fine-tuning settings; unset fields inherit from `[train]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub freeze: usize,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            freeze: 4,
            learning_rate: None,
            epochs: None,
            batch_size: None,
        }
    }
}

fn default_snr_sweep() -> Vec<f64> {
    (0..=6).map(|i| 5.0 * i as f64).collect()
}

fn default_methods() -> Vec<Method> {
    vec![Method::Cb, Method::Zf, Method::GnnPretrained, Method::GnnFinetuned]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_snr_sweep")]
    pub snr_sweep_db: Vec<f64>,
    #[serde(default)]
    pub freeze_sweep: Option<Vec<usize>>,
    /// Scale every dataset to unit mean entry power, measured on its train split.
    #[serde(default = "default_true")]
    pub normalize_power: bool,
    pub scenario: Scenario,
    /// Target data: fine-tuning, from-scratch training, and evaluation.
    pub dataset: DatasetSpec,
    /// Source data for pretraining.
    #[serde(default)]
    pub pretrain: DatasetSpec,
    #[serde(default)]
    pub model: ModelConfig,
    /// Optimization for pretraining and from-scratch runs. `seed` is unused;
    /// the top-level seed drives every random stream.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub finetune: FinetuneConfig,
}

impl ExperimentConfig {
    /// Defaults for everything except the scenario and target dataset.
    pub fn new(scenario: Scenario, dataset: DatasetSpec) -> Self {
        Self {
            seed: 0,
            output_dir: default_output_dir(),
            methods: default_methods(),
            snr_sweep_db: default_snr_sweep(),
            freeze_sweep: None,
            normalize_power: true,
            scenario,
            dataset,
            pretrain: DatasetSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            finetune: FinetuneConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Scenario { users, aps } = self.scenario;
        if users == 0 {
            return Err(Error::config("scenario.users", "must be >= 1"));
        }
        if aps == 0 {
            return Err(Error::config("scenario.aps", "must be >= 1"));
        }
        if self.snr_sweep_db.is_empty() {
            return Err(Error::config("snr_sweep_db", "must not be empty"));
        }
        if self.snr_sweep_db.iter().any(|s| !s.is_finite()) || self.snr_sweep_db.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("snr_sweep_db", "must be finite and strictly increasing"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "select at least one method"));
        }
        if let Some(dup) = self
            .methods
            .iter()
            .enumerate()
            .find(|(i, m)| self.methods[..*i].contains(m))
        {
            return Err(Error::config("methods", format!("`{}` listed twice", dup.1)));
        }
        if let Some(sweep) = &self.freeze_sweep {
            if sweep.is_empty() {
                return Err(Error::config("freeze_sweep", "must not be empty when given"));
            }
            if let Some(bad) = sweep.iter().find(|&&l| l > NUM_LAYERS) {
                return Err(Error::config(
                    "freeze_sweep",
                    format!("{bad} is outside 0..={NUM_LAYERS}"),
                ));
            }
            if sweep.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("freeze_sweep", "must be strictly increasing"));
            }
        }
        self.dataset.validate("dataset", users)?;
        self.pretrain.validate("pretrain", users)?;
        if self.model.hidden_width == 0 {
            return Err(Error::config("model.hidden_width", "must be >= 1"));
        }
        if !(self.model.leaky_slope.is_finite() && self.model.leaky_slope >= 0.0) {
            return Err(Error::config("model.leaky_slope", "must be finite and >= 0"));
        }
        prefix_key("train", self.train.validate(NUM_LAYERS))?;
        if self.finetune.freeze > NUM_LAYERS {
            return Err(Error::config(
                "finetune.freeze",
                format!("must be in 0..={NUM_LAYERS}, got {}", self.finetune.freeze),
            ));
        }
        prefix_key(
            "finetune",
            self.finetune_config(self.finetune.freeze).validate(NUM_LAYERS),
        )
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        TrainConfig {
            freeze_prefix: 0,
            ..self.train.clone()
        }
    }

    /// `[train]` with the `[finetune]` overrides and the given freeze level.
    pub fn finetune_config(&self, freeze: usize) -> TrainConfig {
        let f = &self.finetune;
        TrainConfig {
            freeze_prefix: freeze,
            learning_rate: f.learning_rate.unwrap_or(self.train.learning_rate),
            epochs: f.epochs.unwrap_or(self.train.epochs),
            batch_size: f.batch_size.unwrap_or(self.train.batch_size),
            ..self.train.clone()
        }
    }

    /// Freeze levels evaluated for `gnn_finetuned`.
    pub fn freeze_levels(&self) -> Vec<usize> {
        self.freeze_sweep.clone().unwrap_or_else(|| vec![self.finetune.freeze])
    }

    pub fn total_power(&self) -> f64 {
        self.train.total_power
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn prefix_key(section: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config { key, msg } => Error::config(format!("{section}.{key}"), msg),
        other => other,
    })
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::new(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let msg = e.inner().message().to_string();
        Error::config(if key == "." { "<document>".to_string() } else { key }, msg)
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[scenario]\nusers = 2\naps = 8\n\n[dataset]\nkind = \"synthetic\"\n";

    fn key_of(text: &str) -> String {
        match parse_config_str(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.scenario, Scenario { users: 2, aps: 8 });
        assert_eq!(c.train.learning_rate, 0.005);
        assert_eq!(c.train.epochs, 20);
        assert_eq!(c.finetune.freeze, 4);
        assert_eq!(c.snr_sweep_db, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert_eq!(c.dataset.count, 2000);
        assert_eq!(c.model.hidden_width, 64);
        assert!(c.normalize_power);
        assert_eq!(c.freeze_levels(), vec![4]);
    }

    #[test]
    fn schema_errors_name_the_key() {
        assert_eq!(
            key_of(&format!("{MINIMAL}\n[train]\nlearning_rate = -0.1\n")),
            "train.learning_rate"
        );
        assert_eq!(
            key_of(&format!("{MINIMAL}\n[finetune]\nfreeze = 9\n")),
            "finetune.freeze"
        );
        assert_eq!(
            key_of(&format!("{MINIMAL}\n[train]\nlearnin_rate = 0.1\n")),
            "train.learnin_rate"
        );
        assert_eq!(
            key_of(&format!("{MINIMAL}\n[train]\nepochs = \"many\"\n")),
            "train.epochs"
        );
        assert_eq!(key_of(&format!("methods = []\n{MINIMAL}")), "methods");
        assert_eq!(key_of(&format!("methods = [\"mmse\"]\n{MINIMAL}")), "methods[0]");
        assert_eq!(
            key_of(&format!("snr_sweep_db = [10.0, 5.0]\n{MINIMAL}")),
            "snr_sweep_db"
        );
        assert_eq!(key_of(&format!("freeze_sweep = [0, 9]\n{MINIMAL}")), "freeze_sweep");
        assert_eq!(key_of("[scenario]\nusers = 2\naps = 8\n"), "<document>");
        assert_eq!(
            key_of("[scenario]\nusers = 2\naps = 8\n[dataset]\nkind = \"measured\"\n"),
            "dataset.path"
        );
    }

    #[test]
    fn finetune_inherits_from_train() {
        let c = parse_config_str(&format!(
            "{MINIMAL}\n[train]\nepochs = 3\nbatch_size = 16\n[finetune]\nlearning_rate = 0.001\n"
        ))
        .unwrap();
        let f = c.finetune_config(2);
        assert_eq!(
            (f.epochs, f.batch_size, f.learning_rate, f.freeze_prefix),
            (3, 16, 0.001, 2)
        );
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse_config_str(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(parse_config_str(&a.to_toml().unwrap()).unwrap(), a);
    }
}
