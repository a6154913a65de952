//! Multi-user samples built from single-user measurements.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::measurements::MeasurementSet;
use crate::channel::{ChannelMatrix, ChannelSource};
use crate::error::{Error, Result};

/// Unordered `K`-tuples of position indices, each stored strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub users_per_sample: usize,
    /// `N` of the measurement set the indices refer to.
    pub num_positions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub samples: Vec<Vec<usize>>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.samples.iter().enumerate() {
            if t.len() != self.users_per_sample {
                return Err(Error::InvalidArgument(format!("sample {i} has {} users", t.len())));
            }
            if !is_strictly_increasing(t) || t.last().is_some_and(|&x| x >= self.num_positions) {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} is not a valid sorted tuple: {t:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: SampleSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }
}

fn is_strictly_increasing(t: &[usize]) -> bool {
    t.windows(2).all(|w| w[0] < w[1])
}

/// `C(n, k)` exactly.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Every unordered pair `(i, j)`, `i < j`, in lexicographic order.
pub fn build_two_user_pairs(ms: &MeasurementSet) -> Result<SampleSet> {
    let n = ms.num_positions();
    if n < 2 {
        return Err(Error::InsufficientData(format!("pairing needs N >= 2, got {n}")));
    }
    let samples = (0..n).flat_map(|i| (i + 1..n).map(move |j| vec![i, j])).collect();
    Ok(SampleSet {
        users_per_sample: 2,
        num_positions: n,
        seed: None,
        samples,
    })
}

/// The `k` strongest vectors by `||h_i||`, strongest first; equal norms keep
/// the lower original index first.
pub fn select_top_by_strength(ms: &MeasurementSet, k: usize) -> Result<MeasurementSet> {
    let n = ms.num_positions();
    if k > n || k == 0 {
        return Err(Error::InvalidArgument(format!("cannot select {k} of {n} positions")));
    }
    let strengths: Vec<f64> = (0..n).map(|i| ms.strength(i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| strengths[b].total_cmp(&strengths[a]).then(a.cmp(&b)));
    order.truncate(k);
    ms.select_rows(&order)
}

/// `target_count` distinct sorted 4-tuples drawn uniformly without replacement.
pub fn build_four_user_samples<R: Rng + ?Sized>(
    ms: &MeasurementSet,
    target_count: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    sample_combinations(ms.num_positions(), 4, target_count, rng)
}

/// Rejection sampling over canonical sorted `k`-subsets of `0..n`.
pub fn sample_combinations<R: Rng + ?Sized>(n: usize, k: usize, target_count: usize, rng: &mut R) -> Result<SampleSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("tuple size must be >= 1".into()));
    }
    let available = binomial(n, k);
    if available < target_count as u128 {
        return Err(Error::InsufficientCombinations {
            n,
            k,
            available,
            requested: target_count,
        });
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(target_count);
    let mut samples = Vec::with_capacity(target_count);
    while samples.len() < target_count {
        let mut tuple = rand::seq::index::sample(rng, n, k).into_vec();
        tuple.sort_unstable();
        if seen.insert(tuple.clone()) {
            samples.push(tuple);
        }
    }
    Ok(SampleSet {
        users_per_sample: k,
        num_positions: n,
        seed: None,
        samples,
    })
}

/// Stack `h_i` for `i` in `tuple` into a `K x M` measured channel.
pub fn materialize(ms: &MeasurementSet, tuple: &[usize]) -> Result<ChannelMatrix> {
    if tuple.is_empty() {
        return Err(Error::InvalidArgument("empty tuple".into()));
    }
    if !is_strictly_increasing(tuple) {
        return Err(Error::InvalidArgument(format!(
            "tuple {tuple:?} is not strictly increasing"
        )));
    }
    if let Some(&bad) = tuple.iter().find(|&&i| i >= ms.num_positions()) {
        return Err(Error::InvalidArgument(format!(
            "position {bad} out of bounds for N = {}",
            ms.num_positions()
        )));
    }
    let v = ms.vectors();
    ChannelMatrix::new(
        DMatrix::from_fn(tuple.len(), ms.num_aps(), |r, c| v[(tuple[r], c)]),
        ChannelSource::Measured,
    )
}
