use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LAYERS: usize = 8;
pub const DEFAULT_HIDDEN_WIDTH: usize = 64;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Width of the real-valued edge encoding `[Re, Im]` at input and readout.
pub const EDGE_IO_WIDTH: usize = 2;

/// Which edges contribute to a node message seen by edge `(m, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Mean over every edge incident to the node, including `(m, k)` itself.
    #[default]
    Inclusive,
    /// Mean over the other incident edges; zero when there are none.
    Exclusive,
}

/// The three weight matrices of one message-passing layer, each `d_out x d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub edge: DMatrix<f64>,
    pub ap: DMatrix<f64>,
    pub ue: DMatrix<f64>,
}

impl LayerParams {
    pub fn zeros(d_out: usize, d_in: usize) -> Self {
        Self {
            edge: DMatrix::zeros(d_out, d_in),
            ap: DMatrix::zeros(d_out, d_in),
            ue: DMatrix::zeros(d_out, d_in),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.edge.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.edge.nrows()
    }

    pub fn matrices(&self) -> [&DMatrix<f64>; 3] {
        [&self.edge, &self.ap, &self.ue]
    }

    pub fn matrices_mut(&mut self) -> [&mut DMatrix<f64>; 3] {
        [&mut self.edge, &mut self.ap, &mut self.ue]
    }

    pub fn num_weights(&self) -> usize {
        self.matrices().iter().map(|w| w.len()).sum()
    }
}

/// `(d_in, d_out)` per layer: `2 -> d -> ... -> d -> 2`.
pub fn layer_dims(num_layers: usize, hidden_width: usize) -> Vec<(usize, usize)> {
    (0..num_layers)
        .map(|l| {
            let d_in = if l == 0 { EDGE_IO_WIDTH } else { hidden_width };
            let d_out = if l + 1 == num_layers {
                EDGE_IO_WIDTH
            } else {
                hidden_width
            };
            (d_in, d_out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnParams {
    pub layers: Vec<LayerParams>,
    pub hidden_width: usize,
    pub leaky_slope: f64,
    /// Dataset-level constant `c` dividing the raw CSI at the input.
    pub input_scale: f64,
    pub aggregation: Aggregation,
    /// Seed the weights were initialized from.
    pub seed: u64,
}

impl GnnParams {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(LayerParams::num_weights).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("model has no layers".into()));
        }
        if self.hidden_width == 0 {
            return Err(Error::InvalidParameter("hidden width must be >= 1".into()));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "input scale must be positive, got {}",
                self.input_scale
            )));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::InvalidParameter("leaky slope must be finite".into()));
        }
        for (l, ((d_in, d_out), layer)) in layer_dims(self.num_layers(), self.hidden_width)
            .into_iter()
            .zip(&self.layers)
            .enumerate()
        {
            for w in layer.matrices() {
                if w.shape() != (d_out, d_in) {
                    return Err(Error::InvalidParameter(format!(
                        "layer {} weight is {:?}, expected {:?}",
                        l + 1,
                        w.shape(),
                        (d_out, d_in)
                    )));
                }
                if !w.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "layer {} has non-finite weights",
                        l + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Uniform `[-s, s]` initialization with `s = sqrt(6 / (d_in + d_out))` per matrix.
pub fn init_params<R: Rng + ?Sized>(hidden_width: usize, rng: &mut R, leaky_slope: f64) -> Result<GnnParams> {
    init_params_with_depth(NUM_LAYERS, hidden_width, rng, leaky_slope)
}

/// [`init_params`] with a configurable depth. Depths other than the standard
/// eight are meant for tests.
pub fn init_params_with_depth<R: Rng + ?Sized>(
    num_layers: usize,
    hidden_width: usize,
    rng: &mut R,
    leaky_slope: f64,
) -> Result<GnnParams> {
    if hidden_width == 0 {
        return Err(Error::InvalidArgument("hidden width must be >= 1".into()));
    }
    if num_layers == 0 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    let layers = layer_dims(num_layers, hidden_width)
        .into_iter()
        .map(|(d_in, d_out)| {
            let s = (6.0 / (d_in + d_out) as f64).sqrt();
            let mut draw = || DMatrix::from_fn(d_out, d_in, |_, _| rng.random_range(-s..=s));
            LayerParams {
                edge: draw(),
                ap: draw(),
                ue: draw(),
            }
        })
        .collect();
    Ok(GnnParams {
        layers,
        hidden_width,
        leaky_slope,
        input_scale: 1.0,
        aggregation: Aggregation::Inclusive,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_follow_dims_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = init_params(64, &mut rng, DEFAULT_LEAKY_SLOPE).unwrap();
        assert_eq!(p.num_layers(), 8);
        for w in p.layers[0].matrices() {
            assert_eq!(w.shape(), (64, 2));
        }
        for layer in &p.layers[1..7] {
            for w in layer.matrices() {
                assert_eq!(w.shape(), (64, 64));
            }
        }
        for w in p.layers[7].matrices() {
            assert_eq!(w.shape(), (2, 64));
        }
        p.validate().unwrap();
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_params(16, &mut ChaCha8Rng::seed_from_u64(5), 0.01).unwrap();
        let b = init_params(16, &mut ChaCha8Rng::seed_from_u64(5), 0.01).unwrap();
        assert_eq!(a, b);
        for layer in &a.layers {
            let s = (6.0 / (layer.in_dim() + layer.out_dim()) as f64).sqrt();
            for w in layer.matrices() {
                assert!(w.iter().all(|v| v.abs() <= s));
            }
        }
        assert!(init_params(0, &mut ChaCha8Rng::seed_from_u64(5), 0.01).is_err());
    }

    #[test]
    fn validate_catches_shape_errors() {
        let mut p = init_params(4, &mut ChaCha8Rng::seed_from_u64(1), 0.01).unwrap();
        p.layers[3].ap = DMatrix::zeros(4, 3);
        assert!(matches!(p.validate(), Err(Error::InvalidParameter(_))));
    }
}
