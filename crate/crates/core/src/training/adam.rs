use crate::gnn::{GnnParams, LayerParams};

use super::config::TrainConfig;
use super::freeze::TrainabilityMask;
use super::objective::GradientSet;

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<LayerParams>,
    pub second: Vec<LayerParams>,
}

impl AdamState {
    pub fn new(params: &GnnParams) -> Self {
        let zeros: Vec<_> = params
            .layers
            .iter()
            .map(|l| LayerParams::zeros(l.out_dim(), l.in_dim()))
            .collect();
        Self {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One bias-corrected Adam update. Layers the mask marks frozen are skipped
/// entirely, moments included.
pub fn adam_step(
    params: &mut GnnParams,
    grads: &GradientSet,
    state: &mut AdamState,
    config: &TrainConfig,
    mask: &TrainabilityMask,
) {
    state.step += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let t = state.step as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.adam_eps;

    for (l, layer) in params.layers.iter_mut().enumerate() {
        if !mask.is_trainable(l) {
            continue;
        }
        let g = grads.layers[l].matrices();
        let m = state.first[l].matrices_mut();
        let v = state.second[l].matrices_mut();
        for (((w, g), m), v) in layer.matrices_mut().into_iter().zip(g).zip(m).zip(v) {
            let w = w.as_mut_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for (i, &gi) in g.as_slice().iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::init_params_with_depth;
    use crate::training::freeze_layers;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (GnnParams, GradientSet) {
        let params = init_params_with_depth(3, 2, &mut ChaCha8Rng::seed_from_u64(1), 0.01).unwrap();
        let grads = GradientSet::zeros_like(&params);
        (params, grads)
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut params, mut grads) = setup();
        let config = TrainConfig::default();
        let before = params.layers[1].edge[(0, 1)];
        let g = -0.37;
        grads.layers[1].edge[(0, 1)] = g;
        let mut state = AdamState::new(&params);
        let mask = TrainabilityMask::all_trainable(3);
        adam_step(&mut params, &grads, &mut state, &config, &mask);
        // m_hat = g and v_hat = g^2 after bias correction.
        let expected = before - config.learning_rate * g / (g.abs() + config.adam_eps);
        let after = params.layers[1].edge[(0, 1)];
        assert!((after - expected).abs() < 1e-15);
        assert!((after - before - config.learning_rate).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_only_decays_moments() {
        let (mut params, mut grads) = setup();
        let config = TrainConfig::default();
        let mut state = AdamState::new(&params);
        let mask = TrainabilityMask::all_trainable(3);
        grads.layers[0].ap[(0, 0)] = 1.0;
        adam_step(&mut params, &grads, &mut state, &config, &mask);
        let snapshot = params.clone();
        let m_before = state.first[0].ap[(0, 0)];
        let zero = GradientSet::zeros_like(&params);
        adam_step(&mut params, &zero, &mut state, &config, &mask);
        // Untouched coordinates stay put; the one with history keeps moving on momentum.
        assert_eq!(params.layers[2], snapshot.layers[2]);
        assert_eq!(state.first[0].ap[(0, 0)], m_before * config.adam_beta1);
        assert_eq!(state.first[1].edge, LayerParams::zeros(2, 2).edge);
    }

    #[test]
    fn frozen_layers_are_bit_identical() {
        let (mut params, mut grads) = setup();
        for layer in &mut grads.layers {
            for w in layer.matrices_mut() {
                w.fill(0.25);
            }
        }
        let frozen = params.layers[0].clone();
        let mask = freeze_layers(&params, 1).unwrap();
        let mut state = AdamState::new(&params);
        for _ in 0..10 {
            adam_step(&mut params, &grads, &mut state, &TrainConfig::default(), &mask);
        }
        assert_eq!(params.layers[0], frozen);
        assert_ne!(params.layers[1].edge[(0, 0)], setup().0.layers[1].edge[(0, 0)]);
    }
}
