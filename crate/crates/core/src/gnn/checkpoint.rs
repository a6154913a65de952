//! JSON checkpoint documents.
//!
//! Layout (version 1):
//!
//! ```json
//! {
//!   "format": "cellfree-gnn-checkpoint",
//!   "version": 1,
//!   "num_layers": 8,
//!   "hidden_width": 64,
//!   "leaky_slope": 0.01,
//!   "input_scale": 1.0,
//!   "aggregation": "inclusive",
//!   "seed": 7,
//!   "layers": [
//!     { "edge": { "rows": 64, "cols": 2, "data": [ ... ] }, "ap": { ... }, "ue": { ... } },
//!     ...
//!   ]
//! }
//! ```
//!
//! `data` holds the matrix in row-major order as base-10 floats that parse
//! back to the identical `f64`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::params::{Aggregation, GnnParams, LayerParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "cellfree-gnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixDoc {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn into_matrix(self, what: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::CheckpointMismatch(format!(
                "{what}: {} values for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    edge: MatrixDoc,
    ap: MatrixDoc,
    ue: MatrixDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format: String,
    version: u32,
    num_layers: usize,
    hidden_width: usize,
    leaky_slope: f64,
    input_scale: f64,
    aggregation: Aggregation,
    seed: u64,
    layers: Vec<LayerDoc>,
}

pub fn checkpoint_to_string(params: &GnnParams) -> Result<String> {
    params.validate()?;
    let doc = CheckpointDoc {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        num_layers: params.num_layers(),
        hidden_width: params.hidden_width,
        leaky_slope: params.leaky_slope,
        input_scale: params.input_scale,
        aggregation: params.aggregation,
        seed: params.seed,
        layers: params
            .layers
            .iter()
            .map(|l| LayerDoc {
                edge: MatrixDoc::from_matrix(&l.edge),
                ap: MatrixDoc::from_matrix(&l.ap),
                ue: MatrixDoc::from_matrix(&l.ue),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

pub fn checkpoint_from_str(text: &str) -> Result<GnnParams> {
    let doc: CheckpointDoc = serde_json::from_str(text)?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(Error::CheckpointMismatch(format!("unknown format `{}`", doc.format)));
    }
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "unsupported version {}",
            doc.version
        )));
    }
    if doc.layers.len() != doc.num_layers {
        return Err(Error::CheckpointMismatch(format!(
            "header says {} layers, document has {}",
            doc.num_layers,
            doc.layers.len()
        )));
    }
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(l, d)| {
            Ok(LayerParams {
                edge: d.edge.into_matrix(&format!("layer {} edge", l + 1))?,
                ap: d.ap.into_matrix(&format!("layer {} ap", l + 1))?,
                ue: d.ue.into_matrix(&format!("layer {} ue", l + 1))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let params = GnnParams {
        layers,
        hidden_width: doc.hidden_width,
        leaky_slope: doc.leaky_slope,
        input_scale: doc.input_scale,
        aggregation: doc.aggregation,
        seed: doc.seed,
    };
    params
        .validate()
        .map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
    Ok(params)
}

pub fn save_checkpoint(params: &GnnParams, path: &Path) -> Result<()> {
    let text = checkpoint_to_string(params)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<GnnParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}

/// Fail unless `params` has the given depth, width, and aggregation.
pub fn ensure_architecture(
    params: &GnnParams,
    num_layers: usize,
    hidden_width: usize,
    aggregation: Aggregation,
) -> Result<()> {
    if params.num_layers() != num_layers || params.hidden_width != hidden_width || params.aggregation != aggregation {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint is {} layers x width {} ({:?}), config expects {} x {} ({:?})",
            params.num_layers(),
            params.hidden_width,
            params.aggregation,
            num_layers,
            hidden_width,
            aggregation
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::params::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut params = init_params(6, &mut ChaCha8Rng::seed_from_u64(3), 0.01).unwrap();
        params.input_scale = 1.234_567_890_123_456_7e-5;
        params.seed = 42;
        params.aggregation = Aggregation::Exclusive;
        let text = checkpoint_to_string(&params).unwrap();
        let back = checkpoint_from_str(&text).unwrap();
        assert_eq!(back, params);
        assert_eq!(checkpoint_to_string(&back).unwrap(), text);
    }

    #[test]
    fn weights_are_row_major() {
        let mut params = init_params(3, &mut ChaCha8Rng::seed_from_u64(3), 0.01).unwrap();
        params.layers[0].edge = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v: serde_json::Value = serde_json::from_str(&checkpoint_to_string(&params).unwrap()).unwrap();
        let data = &v["layers"][0]["edge"]["data"];
        assert_eq!(data, &serde_json::json!([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn rejects_tampered_documents() {
        let params = init_params(3, &mut ChaCha8Rng::seed_from_u64(3), 0.01).unwrap();
        let text = checkpoint_to_string(&params).unwrap();
        let wrong_width = text.replacen("\"hidden_width\": 3", "\"hidden_width\": 4", 1);
        assert!(matches!(
            checkpoint_from_str(&wrong_width),
            Err(Error::CheckpointMismatch(_))
        ));
        let wrong_format = text.replacen(CHECKPOINT_FORMAT, "other", 1);
        assert!(checkpoint_from_str(&wrong_format).is_err());
        assert!(ensure_architecture(&params, 8, 4, Aggregation::Inclusive).is_err());
        ensure_architecture(&params, 8, 3, Aggregation::Inclusive).unwrap();
    }
}
