use crate::error::{Error, Result};
use crate::gnn::{GnnParams, LayerParams};

use super::objective::GradientSet;

/// Per-layer trainability, index 0 being layer 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainabilityMask {
    trainable: Vec<bool>,
}

impl TrainabilityMask {
    pub fn all_trainable(num_layers: usize) -> Self {
        Self {
            trainable: vec![true; num_layers],
        }
    }

    pub fn is_trainable(&self, layer_index: usize) -> bool {
        self.trainable[layer_index]
    }

    pub fn num_frozen(&self) -> usize {
        self.trainable.iter().filter(|t| !**t).count()
    }

    pub fn len(&self) -> usize {
        self.trainable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trainable.is_empty()
    }

    /// Zero the gradients of every frozen layer.
    pub fn apply(&self, grads: &mut GradientSet) {
        for (layer, &trainable) in grads.layers.iter_mut().zip(&self.trainable) {
            if !trainable {
                *layer = LayerParams::zeros(layer.out_dim(), layer.in_dim());
            }
        }
    }
}

/// Freeze layers `1..=l`, leaving `l+1..=L` trainable.
pub fn freeze_layers(params: &GnnParams, l: usize) -> Result<TrainabilityMask> {
    let depth = params.num_layers();
    if l > depth {
        return Err(Error::InvalidArgument(format!(
            "freeze prefix {l} out of range 0..={depth}"
        )));
    }
    Ok(TrainabilityMask {
        trainable: (0..depth).map(|i| i >= l).collect(),
    })
}
