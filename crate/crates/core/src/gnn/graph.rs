use nalgebra::DMatrix;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};

/// A node of the complete bipartite AP/UE graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Ap(usize),
    Ue(usize),
}

/// Complete bipartite AP/UE graph with one feature vector per edge.
///
/// Features are stored as a `d x (K*M)` matrix whose column `k*M + m` holds
/// the feature of edge `(m, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGraph {
    num_aps: usize,
    num_ues: usize,
    features: DMatrix<f64>,
    input_scale: f64,
}

impl EdgeGraph {
    pub fn from_features(num_aps: usize, num_ues: usize, features: DMatrix<f64>, input_scale: f64) -> Result<Self> {
        if num_aps == 0 || num_ues == 0 {
            return Err(Error::InvalidArgument("graph needs at least one AP and one UE".into()));
        }
        if features.ncols() != num_aps * num_ues {
            return Err(Error::InvalidArgument(format!(
                "expected {} edge columns, got {}",
                num_aps * num_ues,
                features.ncols()
            )));
        }
        Ok(Self {
            num_aps,
            num_ues,
            features,
            input_scale,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_edges(&self) -> usize {
        self.num_aps * self.num_ues
    }

    pub fn width(&self) -> usize {
        self.features.nrows()
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn edge_index(&self, m: usize, k: usize) -> usize {
        k * self.num_aps + m
    }

    pub fn feature(&self, m: usize, k: usize) -> &[f64] {
        let e = self.edge_index(m, k);
        let d = self.width();
        &self.features.as_slice()[e * d..(e + 1) * d]
    }

    /// Edge indices incident to `node`.
    pub fn incident_edges(&self, node: Node) -> Vec<usize> {
        match node {
            Node::Ap(m) => (0..self.num_ues).map(|k| self.edge_index(m, k)).collect(),
            Node::Ue(k) => (0..self.num_aps).map(|m| self.edge_index(m, k)).collect(),
        }
    }
}

/// Edge `(m, k)` gets `[Re g_{m,k} / c, Im g_{m,k} / c]`.
pub fn build_edge_graph(g: &ChannelMatrix, input_scale: f64) -> Result<EdgeGraph> {
    if !(input_scale > 0.0 && input_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "input scale must be positive, got {input_scale}"
        )));
    }
    let (k, m) = (g.num_ues(), g.num_aps());
    let mut features = DMatrix::zeros(2, k * m);
    for ue in 0..k {
        for ap in 0..m {
            let z = g.get(ap, ue);
            let e = ue * m + ap;
            features[(0, e)] = z.re / input_scale;
            features[(1, e)] = z.im / input_scale;
        }
    }
    EdgeGraph::from_features(m, k, features, input_scale)
}

/// Element-wise mean of the features of all edges incident to `node`.
pub fn aggregate_node_messages(graph: &EdgeGraph, node: Node) -> Result<Vec<f64>> {
    let valid = match node {
        Node::Ap(m) => m < graph.num_aps,
        Node::Ue(k) => k < graph.num_ues,
    };
    if !valid {
        return Err(Error::InvalidArgument(format!("{node:?} is not in the graph")));
    }
    let edges = graph.incident_edges(node);
    let mut acc = vec![0.0; graph.width()];
    for &e in &edges {
        for (a, v) in acc.iter_mut().zip(graph.features.column(e).iter()) {
            *a += v;
        }
    }
    let n = edges.len() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Per-AP feature sums (`d x M`) and per-UE feature sums (`d x K`).
pub(crate) fn node_sums(features: &DMatrix<f64>, num_aps: usize, num_ues: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = features.nrows();
    let mut ap = DMatrix::zeros(d, num_aps);
    let mut ue = DMatrix::zeros(d, num_ues);
    let z = features.as_slice();
    {
        let ap_s = ap.as_mut_slice();
        let ue_s = ue.as_mut_slice();
        for k in 0..num_ues {
            for m in 0..num_aps {
                let col = &z[(k * num_aps + m) * d..(k * num_aps + m + 1) * d];
                for (i, v) in col.iter().enumerate() {
                    ap_s[m * d + i] += v;
                    ue_s[k * d + i] += v;
                }
            }
        }
    }
    (ap, ue)
}
