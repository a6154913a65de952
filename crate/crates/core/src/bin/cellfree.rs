use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cellfree_gnn::channel::ChannelSource;
use cellfree_gnn::dataset::{
    generate_synthetic_dataset, load_measurements_with, write_channel_set, write_measurements, ChannelSetMeta,
    LoadOptions,
};
use cellfree_gnn::experiment::{
    export_csv, load_records, metrics_csv, parse_config, run_experiment, run_freeze_sweep, DatasetKind,
    ExperimentConfig, RunOptions, Session,
};
use cellfree_gnn::{Error, Result};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Cell-free MIMO precoding experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Train even when checkpoints exist.
    #[arg(long, global = true)]
    retrain: bool,
    /// Omit wall-clock times so repeated runs write identical files.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic channel set from the `[dataset]` (or `[pretrain]`) section.
    GenSynth {
        /// Use the `[pretrain]` section instead of `[dataset]`.
        #[arg(long)]
        pretrain: bool,
    },
    /// Validate a measured CSI table and write a normalized copy.
    Ingest {
        /// CSI table; defaults to `dataset.path`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        unit_scale: Option<f64>,
    },
    /// Build multi-user samples and the train/val/test split of `[dataset]`.
    Pairs,
    /// Train the pretrained model on `[pretrain]` data.
    Pretrain,
    /// Fine-tune the pretrained model on `[dataset]` at `finetune.freeze`.
    Finetune,
    /// Fine-tune at each freeze level (default 0..=8) and evaluate.
    FreezeSweep,
    /// Evaluate every configured method over the SNR sweep.
    Eval,
    /// Convert a records JSON file to the metrics CSV table.
    Export {
        /// Records file; defaults to `<out>/metrics.json`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Destination; defaults to `<out>/metrics.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("this command needs --config <path>".into()))?;
    let mut config = parse_config(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    if let Some(out) = &common.out {
        return Ok(out.clone());
    }
    Ok(load_config(common)?.output_dir)
}

fn options(common: &Common) -> RunOptions {
    RunOptions {
        retrain: common.retrain,
        deterministic: common.deterministic,
    }
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::GenSynth { pretrain } => {
            let config = load_config(common)?;
            let spec = if pretrain { &config.pretrain } else { &config.dataset };
            if spec.kind != DatasetKind::Synthetic {
                return Err(Error::config(
                    if pretrain { "pretrain.kind" } else { "dataset.kind" },
                    "gen-synth needs a synthetic dataset",
                ));
            }
            let (k, m) = (config.scenario.users, config.scenario.aps);
            let generator = spec.synthetic_config();
            let set = generate_synthetic_dataset(
                spec.count,
                m,
                k,
                &generator,
                &mut ChaCha8Rng::seed_from_u64(config.seed),
            )?;
            let meta = ChannelSetMeta {
                num_samples: set.len(),
                num_ues: k,
                num_aps: m,
                source: ChannelSource::Synthetic,
                seed: Some(config.seed),
                generator: Some(generator),
            };
            let path = config.output_dir.join("channels.csv");
            write_channel_set(&set, &meta, &path)?;
            report(&path);
        }
        Command::Ingest { input, unit_scale } => {
            let config = common.config.as_ref().map(|_| load_config(common)).transpose()?;
            let input = input
                .or_else(|| config.as_ref().and_then(|c| c.dataset.path.clone()))
                .ok_or_else(|| Error::InvalidArgument("ingest needs --input or dataset.path".into()))?;
            let unit_scale = unit_scale
                .or(config.as_ref().map(|c| c.dataset.unit_scale))
                .unwrap_or(1.0);
            let ms = load_measurements_with(&input, LoadOptions { unit_scale })?;
            let strongest = (0..ms.num_positions()).map(|i| ms.strength(i)).fold(0.0, f64::max);
            println!(
                "{}: {} positions x {} APs, strongest |h| = {strongest:e}",
                input.display(),
                ms.num_positions(),
                ms.num_aps()
            );
            let dir = match &config {
                Some(c) => c.output_dir.clone(),
                None => out_dir(common)?,
            };
            let path = dir.join("measurements.csv");
            write_measurements(&ms, &path)?;
            report(&path);
        }
        Command::Pairs => {
            let session = Session::new(load_config(common)?, options(common))?;
            let data = session.target()?;
            println!(
                "{} samples: train {}, val {}, test {}",
                data.split.total,
                data.train.len(),
                data.val.len(),
                data.test.len()
            );
            session.finish("pairs", None)?;
        }
        Command::Pretrain => {
            let mut session = Session::new(load_config(common)?, options(common))?;
            session.pretrained()?;
            report(&session.checkpoint_path("pretrained"));
            session.finish("pretrain", None)?;
        }
        Command::Finetune => {
            let config = load_config(common)?;
            let freeze = config.finetune.freeze;
            let mut session = Session::new(config, options(common))?;
            session.finetuned(freeze)?;
            report(&session.checkpoint_path(&format!("finetuned_freeze{freeze}")));
            session.finish("finetune", None)?;
        }
        Command::FreezeSweep => {
            let records = run_freeze_sweep(&load_config(common)?, options(common))?;
            print!("{}", metrics_csv(&records)?);
        }
        Command::Eval => {
            let records = run_experiment(&load_config(common)?, options(common))?;
            print!("{}", metrics_csv(&records)?);
        }
        Command::Export { input, csv } => {
            let dir = if input.is_some() && csv.is_some() {
                PathBuf::new()
            } else {
                out_dir(common)?
            };
            let input = input.unwrap_or_else(|| dir.join("metrics.json"));
            let csv = csv.unwrap_or_else(|| dir.join("metrics.csv"));
            export_csv(&load_records(&input)?, &csv)?;
            report(&csv);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
