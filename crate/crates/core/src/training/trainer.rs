use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::channel::{ChannelMatrix, LinkBudget};
use crate::error::{Error, Result};
use crate::gnn::{forward, GnnParams};
use crate::precoders::sum_rate;

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use super::freeze::{freeze_layers, TrainabilityMask};
use super::objective::loss_and_gradients;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_sum_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// CSV with header `epoch,loss,val_sum_rate,seconds`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "loss", "val_sum_rate", "seconds"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.loss.to_string(),
                r.val_sum_rate.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<history>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// `sqrt(mean |g|^2)` over every entry of every channel in the set.
pub fn input_scale_for(channels: &[ChannelMatrix]) -> Result<f64> {
    let (sum, count) = channels.iter().fold((0.0, 0usize), |(s, n), g| {
        (
            s + g.entries().iter().map(|z| z.norm_sqr()).sum::<f64>(),
            n + g.entries().len(),
        )
    });
    if count == 0 || sum <= 0.0 || !sum.is_finite() {
        return Err(Error::InsufficientData(
            "cannot derive an input scale from an empty or all-zero set".into(),
        ));
    }
    Ok((sum / count as f64).sqrt())
}

/// Mean GNN sum rate over `set` under `budget`.
pub fn mean_sum_rate(set: &[ChannelMatrix], params: &GnnParams, budget: &LinkBudget) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let mut total = 0.0;
    for g in set {
        let w = forward(g, params, budget.total_power)?;
        total += sum_rate(g, &w, budget.noise_variance)?.sum_rate;
    }
    Ok(total / set.len() as f64)
}

/// Unsupervised training of every layer at the fixed training SNR.
///
/// The input scale is recomputed from `train_set`. Shuffling draws from
/// `rng`, so a fixed seed reproduces the run exactly.
pub fn train<R: Rng + ?Sized>(
    params: GnnParams,
    train_set: &[ChannelMatrix],
    val_set: &[ChannelMatrix],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(GnnParams, TrainHistory)> {
    let mask = TrainabilityMask::all_trainable(params.num_layers());
    run(params, train_set, val_set, config, &mask, rng)
}

/// Same loop as [`train`] with the first `config.freeze_prefix` layers held fixed.
pub fn fine_tune<R: Rng + ?Sized>(
    pretrained: &GnnParams,
    real_train: &[ChannelMatrix],
    real_val: &[ChannelMatrix],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(GnnParams, TrainHistory)> {
    pretrained.validate()?;
    let mask = freeze_layers(pretrained, config.freeze_prefix)?;
    run(pretrained.clone(), real_train, real_val, config, &mask, rng)
}

fn run<R: Rng + ?Sized>(
    mut params: GnnParams,
    train_set: &[ChannelMatrix],
    val_set: &[ChannelMatrix],
    config: &TrainConfig,
    mask: &TrainabilityMask,
    rng: &mut R,
) -> Result<(GnnParams, TrainHistory)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InsufficientData(
            "training and validation sets must be non-empty".into(),
        ));
    }
    config.validate(params.num_layers())?;
    params.validate()?;
    params.input_scale = input_scale_for(train_set)?;

    let budget = LinkBudget::from_snr(config.total_power, config.train_snr_db)?;
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let (loss, mut grads) = loss_and_gradients(&batch, &params, &budget)?;
            mask.apply(&mut grads);
            adam_step(&mut params, &grads, &mut state, config, mask);
            loss_sum += loss * chunk.len() as f64;
        }
        let val_sum_rate = mean_sum_rate(val_set, &params, &budget)?;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            val_sum_rate,
            seconds: started.elapsed().as_secs_f64(),
        };
        if !(record.loss.is_finite() && record.val_sum_rate.is_finite()) {
            return Err(Error::NumericalFailure {
                stage: format!("epoch {epoch}"),
                detail: "non-finite loss or validation rate".into(),
            });
        }
        history.records.push(record);
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, sample_geometry, PathLossParams};
    use crate::gnn::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_set(seed: u64, n: usize) -> Vec<ChannelMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let geom = sample_geometry(10.0, 4, 2, &mut rng).unwrap();
                generate_channel(&geom, &PathLossParams::default(), &mut rng).unwrap()
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn history_has_one_record_per_epoch() {
        let train_set = tiny_set(1, 10);
        let val_set = tiny_set(2, 3);
        let params = init_params(4, &mut ChaCha8Rng::seed_from_u64(0), 0.01).unwrap();
        let (trained, history) = train(
            params,
            &train_set,
            &val_set,
            &small_config(),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(history.records.len(), 2);
        assert_eq!(history.records[1].epoch, 2);
        assert!((trained.input_scale - input_scale_for(&train_set).unwrap()).abs() < 1e-20);

        let mut buf = Vec::new();
        history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,loss,val_sum_rate,seconds\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn training_is_reproducible() {
        let train_set = tiny_set(1, 10);
        let val_set = tiny_set(2, 3);
        let run = || {
            let params = init_params(4, &mut ChaCha8Rng::seed_from_u64(0), 0.01).unwrap();
            train(
                params,
                &train_set,
                &val_set,
                &small_config(),
                &mut ChaCha8Rng::seed_from_u64(5),
            )
            .unwrap()
            .0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fully_frozen_fine_tune_keeps_weights() {
        let train_set = tiny_set(3, 8);
        let val_set = tiny_set(4, 2);
        let pretrained = init_params(4, &mut ChaCha8Rng::seed_from_u64(9), 0.01).unwrap();
        let config = TrainConfig {
            freeze_prefix: 8,
            ..small_config()
        };
        let (tuned, _) = fine_tune(
            &pretrained,
            &train_set,
            &val_set,
            &config,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(tuned.layers, pretrained.layers);

        let config = TrainConfig {
            freeze_prefix: 0,
            ..small_config()
        };
        let (tuned, _) = fine_tune(
            &pretrained,
            &train_set,
            &val_set,
            &config,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_ne!(tuned.layers[0], pretrained.layers[0]);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let params = init_params(4, &mut ChaCha8Rng::seed_from_u64(0), 0.01).unwrap();
        let set = tiny_set(1, 2);
        assert!(train(params, &[], &set, &small_config(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
