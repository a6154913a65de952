use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

/// Disjoint train/val/test index lists covering `0..total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub total: usize,
    pub fractions: [f64; 3],
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SplitManifest = serde_json::from_str(text)?;
        let mut seen = vec![false; m.total];
        for &i in m.train.iter().chain(&m.val).chain(&m.test) {
            if i >= m.total || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!(
                    "split index {i} repeated or out of range"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("split does not cover every sample".into()));
        }
        Ok(m)
    }
}

/// Shuffle `0..total` under `seed`, then slice `floor(f0 N)`, `floor(f1 N)`,
/// and the remainder.
pub fn split(total: usize, fractions: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidArgument(format!(
            "fractions out of [0, 1]: {fractions:?}"
        )));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "fractions must sum to 1: {fractions:?}"
        )));
    }
    // The epsilon absorbs representation error such as 0.8 * 10 = 7.999...
    let count = |f: f64| ((f * total as f64) + 1e-9).floor() as usize;
    let n_train = count(fractions[0]).min(total);
    let n_val = count(fractions[1]).min(total - n_train);

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(SplitManifest {
        total,
        fractions,
        seed,
        train: order,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        let m = split(1000, DEFAULT_FRACTIONS, 1).unwrap();
        assert_eq!((m.train.len(), m.val.len(), m.test.len()), (800, 100, 100));
        let m = split(10, DEFAULT_FRACTIONS, 1).unwrap();
        assert_eq!((m.train.len(), m.val.len(), m.test.len()), (8, 1, 1));
        let m = split(124_750, DEFAULT_FRACTIONS, 1).unwrap();
        assert_eq!((m.train.len(), m.val.len(), m.test.len()), (99_800, 12_475, 12_475));
    }

    #[test]
    fn seeded_and_round_trips() {
        let a = split(57, DEFAULT_FRACTIONS, 4).unwrap();
        assert_eq!(a, split(57, DEFAULT_FRACTIONS, 4).unwrap());
        assert_ne!(a.train, split(57, DEFAULT_FRACTIONS, 5).unwrap().train);
        assert_eq!(SplitManifest::from_json(&a.to_json().unwrap()).unwrap(), a);
    }

    #[test]
    fn bad_fractions() {
        assert!(split(10, [0.5, 0.1, 0.1], 0).is_err());
        assert!(split(10, [1.2, -0.1, -0.1], 0).is_err());
    }
}
