use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::data::{prepare_dataset, streams, sub_seed, PreparedData};
use super::metrics::{evaluate, export_csv, save_records, write_file, MetricsRecord, Precoder};
use crate::error::{Error, Result};
use crate::gnn::{ensure_architecture, init_params, load_checkpoint, save_checkpoint, GnnParams, NUM_LAYERS};
use crate::training::{fine_tune, train, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Train even when a checkpoint already exists.
    pub retrain: bool,
    /// Drop wall-clock fields from written outputs so reruns are byte-identical.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointEntry {
    pub path: PathBuf,
    pub reused: bool,
}

/// Written as `run_manifest.json` next to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub command: String,
    pub methods: Vec<Method>,
    pub snr_sweep_db: Vec<f64>,
    pub freeze_levels: Vec<usize>,
    pub target_scale: Option<f64>,
    pub pretrain_scale: Option<f64>,
    pub checkpoints: BTreeMap<String, CheckpointEntry>,
    pub outputs: Vec<PathBuf>,
}

/// Lazily prepared datasets and models for one configuration.
///
/// Models come from checkpoints under `<output_dir>/checkpoints` unless they
/// are missing or `retrain` is set; each is built at most once per session.
pub struct Session {
    config: ExperimentConfig,
    options: RunOptions,
    target: OnceCell<PreparedData>,
    source: OnceCell<PreparedData>,
    pretrained: OnceCell<GnnParams>,
    scratch: OnceCell<GnnParams>,
    finetuned: BTreeMap<usize, GnnParams>,
    checkpoints: BTreeMap<String, CheckpointEntry>,
    outputs: Vec<PathBuf>,
}

impl Session {
    pub fn new(config: ExperimentConfig, options: RunOptions) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            options,
            target: OnceCell::new(),
            source: OnceCell::new(),
            pretrained: OnceCell::new(),
            scratch: OnceCell::new(),
            finetuned: BTreeMap::new(),
            checkpoints: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.output_dir().join("checkpoints").join(format!("{name}.json"))
    }

    fn seed(&self, stream: u64) -> u64 {
        sub_seed(self.config.seed, stream)
    }

    /// The evaluation dataset (also used for fine-tuning and from-scratch runs).
    pub fn target(&self) -> Result<&PreparedData> {
        if let Some(d) = self.target.get() {
            return Ok(d);
        }
        let c = &self.config;
        let d = prepare_dataset(
            &c.dataset,
            c.scenario.users,
            c.scenario.aps,
            c.normalize_power,
            self.seed(streams::TARGET_DATA),
        )?;
        Ok(self.target.get_or_init(|| d))
    }

    /// The pretraining dataset.
    pub fn source(&self) -> Result<&PreparedData> {
        if let Some(d) = self.source.get() {
            return Ok(d);
        }
        let c = &self.config;
        let d = prepare_dataset(
            &c.pretrain,
            c.scenario.users,
            c.scenario.aps,
            c.normalize_power,
            self.seed(streams::PRETRAIN_DATA),
        )?;
        Ok(self.source.get_or_init(|| d))
    }

    fn fresh_params(&self, stream: u64) -> Result<GnnParams> {
        let m = &self.config.model;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed(stream));
        let mut params = init_params(m.hidden_width, &mut rng, m.leaky_slope)?;
        params.aggregation = m.aggregation;
        params.seed = self.config.seed;
        Ok(params)
    }

    fn reuse(&mut self, name: &str) -> Result<Option<GnnParams>> {
        let path = self.checkpoint_path(name);
        if self.options.retrain || !path.exists() {
            return Ok(None);
        }
        let params = load_checkpoint(&path)?;
        let m = &self.config.model;
        ensure_architecture(&params, NUM_LAYERS, m.hidden_width, m.aggregation)?;
        if params.leaky_slope != m.leaky_slope {
            return Err(Error::CheckpointMismatch(format!(
                "{}: leaky slope {} differs from configured {}",
                path.display(),
                params.leaky_slope,
                m.leaky_slope
            )));
        }
        self.checkpoints
            .insert(name.into(), CheckpointEntry { path, reused: true });
        Ok(Some(params))
    }

    fn store(&mut self, name: &str, params: &GnnParams, mut history: TrainHistory) -> Result<()> {
        let path = self.checkpoint_path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        save_checkpoint(params, &path)?;
        if self.options.deterministic {
            history.records.iter_mut().for_each(|r| r.seconds = 0.0);
        }
        let hist = self.output_dir().join(format!("history_{name}.csv"));
        history.save_csv(&hist)?;
        self.outputs.push(hist);
        self.checkpoints
            .insert(name.into(), CheckpointEntry { path, reused: false });
        Ok(())
    }

    /// Model trained on the pretraining dataset.
    pub fn pretrained(&mut self) -> Result<&GnnParams> {
        if self.pretrained.get().is_none() {
            let params = match self.reuse("pretrained")? {
                Some(p) => p,
                None => {
                    let init = self.fresh_params(streams::PRETRAIN_INIT)?;
                    let data = self.source()?;
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed(streams::PRETRAIN_SHUFFLE));
                    let (p, h) = train(init, &data.train, &data.val, &self.config.pretrain_config(), &mut rng)?;
                    self.store("pretrained", &p, h)?;
                    p
                }
            };
            let _ = self.pretrained.set(params);
        }
        Ok(self.pretrained.get().expect("set above"))
    }

    /// The pretrained model fine-tuned on the target dataset with the first
    /// `freeze` layers fixed.
    pub fn finetuned(&mut self, freeze: usize) -> Result<&GnnParams> {
        if !self.finetuned.contains_key(&freeze) {
            let name = format!("finetuned_freeze{freeze}");
            let params = match self.reuse(&name)? {
                Some(p) => p,
                None => {
                    let pretrained = self.pretrained()?.clone();
                    let config: TrainConfig = self.config.finetune_config(freeze);
                    let data = self.target()?;
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed(streams::FINETUNE_BASE + freeze as u64));
                    let (p, h) = fine_tune(&pretrained, &data.train, &data.val, &config, &mut rng)?;
                    self.store(&name, &p, h)?;
                    p
                }
            };
            self.finetuned.insert(freeze, params);
        }
        Ok(&self.finetuned[&freeze])
    }

    /// Model trained only on the target dataset's train split.
    pub fn scratch(&mut self) -> Result<&GnnParams> {
        if self.scratch.get().is_none() {
            let params = match self.reuse("scratch")? {
                Some(p) => p,
                None => {
                    let init = self.fresh_params(streams::SCRATCH_INIT)?;
                    let data = self.target()?;
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed(streams::SCRATCH_SHUFFLE));
                    let (p, h) = train(init, &data.train, &data.val, &self.config.pretrain_config(), &mut rng)?;
                    self.store("scratch", &p, h)?;
                    p
                }
            };
            let _ = self.scratch.set(params);
        }
        Ok(self.scratch.get().expect("set above"))
    }

    /// Records for `method` over the SNR sweep on the target test split.
    pub fn evaluate_method(&mut self, method: Method, freeze_levels: &[usize]) -> Result<Vec<MetricsRecord>> {
        let sweep = self.config.snr_sweep_db.clone();
        let p_t = self.config.total_power();
        match method {
            Method::Cb | Method::Zf => {
                let precoder = if method == Method::Cb {
                    Precoder::Cb
                } else {
                    Precoder::Zf
                };
                evaluate(method, None, precoder, &self.target()?.test, &sweep, p_t)
            }
            Method::GnnPretrained => {
                let params = self.pretrained()?.clone();
                evaluate(method, None, Precoder::Gnn(&params), &self.target()?.test, &sweep, p_t)
            }
            Method::GnnScratch => {
                let params = self.scratch()?.clone();
                evaluate(method, None, Precoder::Gnn(&params), &self.target()?.test, &sweep, p_t)
            }
            Method::GnnFinetuned => {
                let mut out = Vec::new();
                for &l in freeze_levels {
                    let params = self.finetuned(l)?.clone();
                    out.extend(evaluate(
                        method,
                        Some(l),
                        Precoder::Gnn(&params),
                        &self.target()?.test,
                        &sweep,
                        p_t,
                    )?);
                }
                Ok(out)
            }
        }
    }

    /// Write the split manifests (and measured tuples) of prepared datasets.
    fn write_splits(&mut self) -> Result<()> {
        let mut files = Vec::new();
        for (name, data) in [("target", self.target.get()), ("pretrain", self.source.get())] {
            let Some(data) = data else { continue };
            let path = self.output_dir().join(format!("split_{name}.json"));
            write_file(&path, &data.split.to_json()?)?;
            files.push(path);
            if let Some(samples) = &data.samples {
                let path = self.output_dir().join(format!("samples_{name}.json"));
                write_file(&path, &samples.to_json()?)?;
                files.push(path);
            }
        }
        self.outputs.extend(files);
        Ok(())
    }

    /// Write split manifests, the records (as `<csv_name>` and the matching
    /// `.json`) when given, and `run_manifest.json`.
    pub fn finish(mut self, command: &str, records: Option<(&[MetricsRecord], &str)>) -> Result<RunManifest> {
        self.write_splits()?;
        if let Some((records, csv_name)) = records {
            let csv = self.output_dir().join(csv_name);
            export_csv(records, &csv)?;
            let json = csv.with_extension("json");
            save_records(records, &json)?;
            self.outputs.push(csv);
            self.outputs.push(json);
        }
        self.outputs.sort();
        self.outputs.dedup();
        let manifest = RunManifest {
            config_sha256: self.config.hash()?,
            seed: self.config.seed,
            command: command.into(),
            methods: self.config.methods.clone(),
            snr_sweep_db: self.config.snr_sweep_db.clone(),
            freeze_levels: self.config.freeze_levels(),
            target_scale: self.target.get().map(|d| d.scale),
            pretrain_scale: self.source.get().map(|d| d.scale),
            checkpoints: self.checkpoints.clone(),
            outputs: self.outputs.clone(),
        };
        let path = self.output_dir().join("run_manifest.json");
        write_file(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
        Ok(manifest)
    }
}

/// Evaluate every configured method over the SNR sweep and write
/// `metrics.csv`, `metrics.json`, split manifests, and `run_manifest.json`
/// into the output directory.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<Vec<MetricsRecord>> {
    let mut session = Session::new(config.clone(), options)?;
    let levels = config.freeze_levels();
    let mut records = Vec::new();
    for &method in &config.methods {
        records.extend(session.evaluate_method(method, &levels)?);
    }
    session.finish("eval", Some((&records, "metrics.csv")))?;
    Ok(records)
}

/// Fine-tune at every level in `levels` (default `0..=8`) and write
/// `freeze_sweep.csv` with one record group per level.
pub fn run_freeze_sweep(config: &ExperimentConfig, options: RunOptions) -> Result<Vec<MetricsRecord>> {
    let levels = config
        .freeze_sweep
        .clone()
        .unwrap_or_else(|| (0..=NUM_LAYERS).collect());
    let mut session = Session::new(config.clone(), options)?;
    let records = session.evaluate_method(Method::GnnFinetuned, &levels)?;
    session.finish("freeze-sweep", Some((&records, "freeze_sweep.csv")))?;
    Ok(records)
}
