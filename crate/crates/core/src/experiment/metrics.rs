use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::channel::{ChannelMatrix, LinkBudget};
use crate::error::{Error, Result};
use crate::gnn::{forward, GnnParams};
use crate::precoders::{conjugate_beamforming, sum_rate, zero_forcing, PrecodingMatrix};

pub const METRICS_HEADER: &str = "method,freeze,snr_db,mean_sum_rate,std,count";

/// Mean sum rate of one method at one SNR over a test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze: Option<usize>,
    pub snr_db: f64,
    /// Bits per channel use.
    pub mean_sum_rate: f64,
    /// Sample standard deviation (`n - 1` denominator; 0 for a single sample).
    pub std: f64,
    pub count: usize,
    /// Samples left out because the precoder was undefined (singular ZF).
    #[serde(default)]
    pub skipped: usize,
}

/// How to precode each sample.
#[derive(Debug, Clone, Copy)]
pub enum Precoder<'a> {
    Cb,
    Zf,
    Gnn(&'a GnnParams),
}

impl Precoder<'_> {
    fn apply(&self, g: &ChannelMatrix, total_power: f64) -> Result<PrecodingMatrix> {
        match self {
            Precoder::Cb => conjugate_beamforming(g, total_power),
            Precoder::Zf => zero_forcing(g, total_power),
            Precoder::Gnn(p) => forward(g, p, total_power),
        }
    }
}

/// Evaluate `precoder` on `test` at each SNR. Samples where ZF is undefined
/// are skipped and counted; every other failure aborts.
pub fn evaluate(
    method: Method,
    freeze: Option<usize>,
    precoder: Precoder<'_>,
    test: &[ChannelMatrix],
    snr_sweep_db: &[f64],
    total_power: f64,
) -> Result<Vec<MetricsRecord>> {
    // The precoder does not depend on the noise level, so compute it once.
    let mut precoded = Vec::with_capacity(test.len());
    let mut skipped = 0;
    for g in test {
        match precoder.apply(g, total_power) {
            Ok(w) => precoded.push((g, w)),
            Err(Error::SingularChannel(_) | Error::InvalidArgument(_)) if matches!(precoder, Precoder::Zf) => {
                skipped += 1
            }
            Err(e) => return Err(e),
        }
    }
    if precoded.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{method}: no test sample could be precoded"
        )));
    }
    snr_sweep_db
        .iter()
        .map(|&snr_db| {
            let budget = LinkBudget::from_snr(total_power, snr_db)?;
            let rates = precoded
                .iter()
                .map(|(g, w)| Ok(sum_rate(g, w, budget.noise_variance)?.sum_rate))
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std) = mean_std(&rates);
            if !mean.is_finite() {
                return Err(Error::NumericalFailure {
                    stage: format!("evaluation of {method} at {snr_db} dB"),
                    detail: "non-finite mean sum rate".into(),
                });
            }
            Ok(MetricsRecord {
                method,
                freeze,
                snr_db,
                mean_sum_rate: mean,
                std,
                count: rates.len(),
                skipped,
            })
        })
        .collect()
}

/// Mean and sample standard deviation, summed in index order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn sort_key(a: &MetricsRecord, b: &MetricsRecord) -> std::cmp::Ordering {
    a.method
        .name()
        .cmp(b.method.name())
        .then(a.freeze.cmp(&b.freeze))
        .then(a.snr_db.total_cmp(&b.snr_db))
}

/// Render records as CSV sorted by (method, freeze, snr). Floats use the
/// shortest representation that parses back to the same value; a missing
/// freeze level is an empty field.
pub fn metrics_csv(records: &[MetricsRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no metrics records to export".into()));
    }
    let mut sorted: Vec<&MetricsRecord> = records.iter().collect();
    sorted.sort_by(|a, b| sort_key(a, b));
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in sorted {
        let freeze = r.freeze.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:?},{:?},{:?},{}\n",
            r.method, freeze, r.snr_db, r.mean_sum_rate, r.std, r.count
        ));
    }
    Ok(out)
}

pub fn export_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let text = metrics_csv(records)?;
    write_file(path, &text)
}

pub fn save_records(records: &[MetricsRecord], path: &Path) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(records)? + "\n"))
}

pub fn load_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
