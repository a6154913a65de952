//! Synthetic multi-user channel sets.
//!
//! Channel-set files are text tables with header
//! `sample_id,ue_id,ap_id,re,im`, sample-major then UE-major, plus a
//! `<file>.meta.json` sidecar holding `num_samples`, `num_ues`, `num_aps`,
//! `source` and, for generated sets, the seed and generator settings.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::measurements::sidecar_path;
use crate::channel::{generate_channel, sample_geometry, ChannelMatrix, ChannelSource, PathLossParams};
use crate::error::{Error, Result};

pub const CHANNEL_SET_HEADER: [&str; 5] = ["sample_id", "ue_id", "ap_id", "re", "im"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub area_side_m: f64,
    #[serde(flatten)]
    pub path_loss: PathLossParams,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            area_side_m: 10.0,
            path_loss: PathLossParams::default(),
        }
    }
}

/// `count` independent geometry + fading draws of shape `k x m`.
pub fn generate_synthetic_dataset<R: Rng + ?Sized>(
    count: usize,
    m: usize,
    k: usize,
    config: &SyntheticConfig,
    rng: &mut R,
) -> Result<Vec<ChannelMatrix>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    config.path_loss.validate()?;
    (0..count)
        .map(|_| {
            let geom = sample_geometry(config.area_side_m, m, k, rng)?;
            generate_channel(&geom, &config.path_loss, rng)
        })
        .collect()
}

/// Mean per-entry power `E|g|^2` over a set.
pub fn mean_entry_power(set: &[ChannelMatrix]) -> Result<f64> {
    let (sum, n) = set.iter().fold((0.0, 0usize), |(s, n), g| {
        (
            s + g.mean_entry_power() * g.entries().len() as f64,
            n + g.entries().len(),
        )
    });
    if n == 0 || sum.is_nan() || sum <= 0.0 {
        return Err(Error::InsufficientData(
            "cannot normalize an empty or all-zero set".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// Multiply every channel in `set` by `factor`.
pub fn rescale(set: &[ChannelMatrix], factor: f64) -> Vec<ChannelMatrix> {
    set.iter().map(|g| g.scaled(factor)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSetMeta {
    pub num_samples: usize,
    pub num_ues: usize,
    pub num_aps: usize,
    pub source: ChannelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SyntheticConfig>,
}

pub fn write_channel_set(set: &[ChannelMatrix], meta: &ChannelSetMeta, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = CHANNEL_SET_HEADER.join(",");
    out.push('\n');
    for (s, g) in set.iter().enumerate() {
        for k in 0..g.num_ues() {
            for m in 0..g.num_aps() {
                let z = g.get(m, k);
                out.push_str(&format!("{s},{k},{m},{:e},{:e}\n", z.re, z.im));
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(meta)? + "\n").map_err(|e| Error::io(&side, e))
}

pub fn load_channel_set(path: &Path) -> Result<(Vec<ChannelMatrix>, ChannelSetMeta)> {
    let side = sidecar_path(path);
    let meta: ChannelSetMeta = serde_json::from_str(&fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    if header.split(',').map(str::trim).ne(CHANNEL_SET_HEADER) {
        return Err(parse_err(
            hl,
            format!("expected header `{}`", CHANNEL_SET_HEADER.join(",")),
        ));
    }
    let (n, k, m) = (meta.num_samples, meta.num_ues, meta.num_aps);
    let per_sample = k * m;
    let mut values = Vec::with_capacity(n * per_sample);
    for (line, row) in lines {
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(parse_err(line, format!("expected 5 fields, found {}", cols.len())));
        }
        let idx = values.len();
        let expected = [idx / per_sample, (idx % per_sample) / m, idx % m];
        for (c, want) in cols[..3].iter().zip(expected) {
            let got: usize = c.parse().map_err(|_| parse_err(line, format!("bad index `{c}`")))?;
            if got != want {
                return Err(parse_err(line, format!("index {got} out of order (expected {want})")));
            }
        }
        let re: f64 = cols[3]
            .parse()
            .map_err(|_| parse_err(line, format!("bad re `{}`", cols[3])))?;
        let im: f64 = cols[4]
            .parse()
            .map_err(|_| parse_err(line, format!("bad im `{}`", cols[4])))?;
        if !(re.is_finite() && im.is_finite()) {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                line,
            });
        }
        values.push(Complex64::new(re, im));
    }
    if values.len() != n * per_sample {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {} rows, found {}", n * per_sample, values.len()),
        ));
    }
    let set = values
        .chunks(per_sample)
        .map(|c| ChannelMatrix::new(DMatrix::from_row_slice(k, m, c), meta.source))
        .collect::<Result<Vec<_>>>()?;
    Ok((set, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::large_scale_gain;
    use crate::channel::Geometry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig::default();
        let a = generate_synthetic_dataset(2000, 8, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.len(), 2000);
        assert!(a.iter().all(|g| (g.num_ues(), g.num_aps()) == (2, 8)));
        let b = generate_synthetic_dataset(2000, 8, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(generate_synthetic_dataset(0, 8, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn empirical_power_follows_path_loss() {
        // Average |g|^2 against the average of 10^(-PL/10) over the same
        // geometry law, both estimated by Monte Carlo with independent draws.
        let cfg = SyntheticConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let set = generate_synthetic_dataset(20_000, 1, 1, &cfg, &mut rng).unwrap();
        let empirical: Vec<f64> = set.iter().map(|g| g.get(0, 0).norm_sqr()).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let oracle: Vec<f64> = (0..20_000)
            .map(|_| {
                let ap = [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0];
                let ue = [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0];
                let geom = Geometry::new(vec![ap], vec![ue]).unwrap();
                large_scale_gain(geom.distance(0, 0), &cfg.path_loss).unwrap()
            })
            .collect();
        let stats = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            (mean, (var / v.len() as f64).sqrt())
        };
        let (m1, s1) = stats(&empirical);
        let (m2, s2) = stats(&oracle);
        assert!((m1 - m2).abs() < 3.0 * (s1 * s1 + s2 * s2).sqrt(), "{m1} vs {m2}");
    }

    #[test]
    fn channel_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csv");
        let cfg = SyntheticConfig::default();
        let set = generate_synthetic_dataset(5, 3, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let meta = ChannelSetMeta {
            num_samples: 5,
            num_ues: 2,
            num_aps: 3,
            source: ChannelSource::Synthetic,
            seed: Some(4),
            generator: Some(cfg),
        };
        write_channel_set(&set, &meta, &path).unwrap();
        let (back, back_meta) = load_channel_set(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(back_meta, meta);
    }

    #[test]
    fn normalization_gives_unit_power() {
        let set = generate_synthetic_dataset(50, 4, 2, &SyntheticConfig::default(), &mut ChaCha8Rng::seed_from_u64(6))
            .unwrap();
        let p = mean_entry_power(&set).unwrap();
        let scaled = rescale(&set, 1.0 / p.sqrt());
        assert!((mean_entry_power(&scaled).unwrap() - 1.0).abs() < 1e-12);
    }
}
