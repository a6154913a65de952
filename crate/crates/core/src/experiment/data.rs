use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DatasetKind, DatasetSpec};
use crate::channel::ChannelMatrix;
use crate::dataset::{
    binomial, build_two_user_pairs, load_channel_set, load_measurements_with, materialize, mean_entry_power,
    sample_combinations, select_top_by_strength, split, LoadOptions, MeasurementSet, SampleSet, SplitManifest,
};
use crate::error::{Error, Result};

/// Default number of multi-user samples drawn from measurements when `K > 2`.
pub const DEFAULT_MEASURED_TUPLES: usize = 124_750;

/// Derive an independent seed for one named purpose.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

pub(crate) mod streams {
    pub const TARGET_DATA: u64 = 1;
    pub const PRETRAIN_DATA: u64 = 2;
    pub const PRETRAIN_INIT: u64 = 3;
    pub const PRETRAIN_SHUFFLE: u64 = 4;
    pub const SCRATCH_INIT: u64 = 5;
    pub const SCRATCH_SHUFFLE: u64 = 6;
    /// Fine-tuning at freeze level `l` uses `FINETUNE_BASE + l`.
    pub const FINETUNE_BASE: u64 = 100;
}

/// Channels of one dataset after splitting and optional normalization.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<ChannelMatrix>,
    pub val: Vec<ChannelMatrix>,
    pub test: Vec<ChannelMatrix>,
    pub split: SplitManifest,
    /// Tuples behind each sample when built from measurements.
    pub samples: Option<SampleSet>,
    /// Factor applied to every channel (1 when not normalized).
    pub scale: f64,
}

/// Multi-user samples from single-user measurements: every pair for two users,
/// otherwise tuples drawn without replacement from the `top_k` strongest
/// positions (all positions when unset).
pub fn measured_samples(
    ms: &MeasurementSet,
    users: usize,
    spec: &DatasetSpec,
    seed: u64,
) -> Result<(MeasurementSet, SampleSet)> {
    let pool = match spec.top_k {
        Some(k) => select_top_by_strength(ms, k)?,
        None => ms.clone(),
    };
    let n = pool.num_positions();
    let available = binomial(n, users);
    let mut set = if users == 2 && spec.max_samples.is_none_or(|c| c as u128 >= available) {
        build_two_user_pairs(&pool)?
    } else {
        let default = if users == 2 {
            available
        } else {
            DEFAULT_MEASURED_TUPLES as u128
        };
        let target = spec.max_samples.map_or(default.min(available), |c| c as u128);
        let target = usize::try_from(target).map_err(|_| Error::InvalidArgument("sample target too large".into()))?;
        let mut set = sample_combinations(n, users, target, &mut ChaCha8Rng::seed_from_u64(seed))?;
        set.seed = Some(seed);
        set
    };
    set.num_positions = n;
    Ok((pool, set))
}

/// Build, split, and (optionally) normalize one dataset for `users x aps`.
pub fn prepare_dataset(
    spec: &DatasetSpec,
    users: usize,
    aps: usize,
    normalize: bool,
    seed: u64,
) -> Result<PreparedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (channels, samples) = match spec.kind {
        DatasetKind::Synthetic => {
            let set =
                crate::dataset::generate_synthetic_dataset(spec.count, aps, users, &spec.synthetic_config(), &mut rng)?;
            (set, None)
        }
        DatasetKind::Measured => {
            let path = spec
                .path
                .as_deref()
                .ok_or_else(|| Error::config("dataset.path", "missing"))?;
            let ms = load_measurements_with(
                path,
                LoadOptions {
                    unit_scale: spec.unit_scale,
                },
            )?;
            if ms.num_aps() != aps {
                return Err(Error::InvalidArgument(format!(
                    "{}: measurements have {} APs, scenario expects {aps}",
                    path.display(),
                    ms.num_aps()
                )));
            }
            let (pool, set) = measured_samples(&ms, users, spec, rng.next_u64())?;
            let channels = set
                .samples
                .iter()
                .map(|t| materialize(&pool, t))
                .collect::<Result<Vec<_>>>()?;
            (channels, Some(set))
        }
        DatasetKind::ChannelSet => {
            let path = spec
                .path
                .as_deref()
                .ok_or_else(|| Error::config("dataset.path", "missing"))?;
            let (set, meta) = load_channel_set(path)?;
            if (meta.num_ues, meta.num_aps) != (users, aps) {
                return Err(Error::InvalidArgument(format!(
                    "{}: channel set is {}x{}, scenario expects {users}x{aps}",
                    path.display(),
                    meta.num_ues,
                    meta.num_aps
                )));
            }
            let set = if spec.unit_scale != 1.0 {
                crate::dataset::rescale(&set, spec.unit_scale)
            } else {
                set
            };
            (set, None)
        }
    };

    let manifest = split(channels.len(), spec.fractions, rng.next_u64())?;
    if manifest.train.is_empty() || manifest.val.is_empty() || manifest.test.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} samples leave an empty train, val, or test split",
            channels.len()
        )));
    }
    let pick = |ix: &[usize]| ix.iter().map(|&i| channels[i].clone()).collect::<Vec<_>>();
    let train = pick(&manifest.train);
    let scale = if normalize {
        1.0 / mean_entry_power(&train)?.sqrt()
    } else {
        1.0
    };
    let apply = |set: Vec<ChannelMatrix>| {
        if scale == 1.0 {
            set
        } else {
            crate::dataset::rescale(&set, scale)
        }
    };
    Ok(PreparedData {
        train: apply(train),
        val: apply(pick(&manifest.val)),
        test: apply(pick(&manifest.test)),
        split: manifest,
        samples,
        scale,
    })
}
