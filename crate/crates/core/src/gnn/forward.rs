//! Message passing and readout.
//!
//! One layer computes, for every edge `(m, k)` from a read-only snapshot of the
//! input features,
//!
//! ```text
//! z' = act(W_edge z + W_ap msg(AP m) + W_ue msg(UE k))
//! ```
//!
//! Messages are written as `a * S_v + b * z` where `S_v` is the feature sum over
//! the node's incident edges: inclusive means use `a = 1/n, b = 0`, exclusive
//! means use `a = 1/(n-1), b = -1/(n-1)`. The edge-local part therefore folds
//! into one effective matrix `W_edge + b_ap W_ap + b_ue W_ue`, and node terms
//! are computed once per node instead of once per edge.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::graph::{build_edge_graph, node_sums, EdgeGraph};
use super::params::{Aggregation, GnnParams, LayerParams, EDGE_IO_WIDTH};
use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::precoders::{normalize_power, PrecodingMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) if x < 0.0 => slope * x,
            _ => x,
        }
    }

    /// Derivative at `x`; the kink at zero takes the positive branch.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) if x < 0.0 => slope,
            _ => 1.0,
        }
    }
}

/// `(a, b)` such that the message of a node with `n` edges, seen from edge
/// `e`, is `a * sum + b * z_e`.
pub(crate) fn message_coefficients(n: usize, aggregation: Aggregation) -> (f64, f64) {
    match aggregation {
        Aggregation::Inclusive => (1.0 / n as f64, 0.0),
        Aggregation::Exclusive if n > 1 => {
            let inv = 1.0 / (n - 1) as f64;
            (inv, -inv)
        }
        Aggregation::Exclusive => (0.0, 0.0),
    }
}

/// Intermediate values of one layer needed by the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub input: DMatrix<f64>,
    pub ap_sums: DMatrix<f64>,
    pub ue_sums: DMatrix<f64>,
    pub pre: DMatrix<f64>,
    pub activation: Activation,
}

pub(crate) fn layer_pre_activation(
    input: &DMatrix<f64>,
    num_aps: usize,
    num_ues: usize,
    layer: &LayerParams,
    aggregation: Aggregation,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if input.nrows() != layer.in_dim() {
        return Err(Error::InvalidParameter(format!(
            "feature width {} does not match layer input width {}",
            input.nrows(),
            layer.in_dim()
        )));
    }
    if layer.ap.shape() != layer.edge.shape() || layer.ue.shape() != layer.edge.shape() {
        return Err(Error::InvalidParameter("layer weight shapes disagree".into()));
    }
    let (a_ap, b_ap) = message_coefficients(num_ues, aggregation);
    let (a_ue, b_ue) = message_coefficients(num_aps, aggregation);

    let (ap_sums, ue_sums) = node_sums(input, num_aps, num_ues);
    let mut w_eff = layer.edge.clone();
    if b_ap != 0.0 {
        w_eff += &layer.ap * b_ap;
    }
    if b_ue != 0.0 {
        w_eff += &layer.ue * b_ue;
    }
    let mut pre = &w_eff * input;
    let ap_term = (&layer.ap * &ap_sums) * a_ap;
    let ue_term = (&layer.ue * &ue_sums) * a_ue;

    let d_out = layer.out_dim();
    let ap_s = ap_term.as_slice();
    let ue_s = ue_term.as_slice();
    let pre_s = pre.as_mut_slice();
    for k in 0..num_ues {
        for m in 0..num_aps {
            let e = k * num_aps + m;
            let col = &mut pre_s[e * d_out..(e + 1) * d_out];
            let ap_col = &ap_s[m * d_out..(m + 1) * d_out];
            let ue_col = &ue_s[k * d_out..(k + 1) * d_out];
            for i in 0..d_out {
                col[i] += ap_col[i] + ue_col[i];
            }
        }
    }
    Ok((pre, ap_sums, ue_sums))
}

/// One synchronous message-passing update.
pub fn layer_forward(
    graph: &EdgeGraph,
    layer: &LayerParams,
    activation: Activation,
    aggregation: Aggregation,
) -> Result<EdgeGraph> {
    let (pre, _, _) = layer_pre_activation(graph.features(), graph.num_aps(), graph.num_ues(), layer, aggregation)?;
    EdgeGraph::from_features(
        graph.num_aps(),
        graph.num_ues(),
        pre.map(|x| activation.apply(x)),
        graph.input_scale(),
    )
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub num_aps: usize,
    pub num_ues: usize,
    pub layers: Vec<LayerCache>,
    /// Readout before power normalization, `M x K`.
    pub raw: DMatrix<Complex64>,
}

fn check_finite(m: &DMatrix<f64>, layer: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure {
            stage: format!("layer {layer}"),
            detail: "non-finite activation".into(),
        })
    }
}

pub(crate) fn forward_trace(g: &ChannelMatrix, params: &GnnParams) -> Result<ForwardTrace> {
    let graph = build_edge_graph(g, params.input_scale)?;
    let (num_aps, num_ues) = (graph.num_aps(), graph.num_ues());
    let depth = params.num_layers();
    let mut z = graph.features().clone();
    let mut caches = Vec::with_capacity(depth);
    for (l, layer) in params.layers.iter().enumerate() {
        let activation = if l + 1 < depth {
            Activation::LeakyRelu(params.leaky_slope)
        } else {
            Activation::Identity
        };
        let (pre, ap_sums, ue_sums) = layer_pre_activation(&z, num_aps, num_ues, layer, params.aggregation)?;
        check_finite(&pre, l + 1)?;
        let out = match activation {
            Activation::Identity => pre.clone(),
            act => pre.map(|x| act.apply(x)),
        };
        caches.push(LayerCache {
            input: std::mem::replace(&mut z, out),
            ap_sums,
            ue_sums,
            pre,
            activation,
        });
    }
    if z.nrows() != EDGE_IO_WIDTH {
        return Err(Error::InvalidParameter(format!(
            "readout width is {}, expected {EDGE_IO_WIDTH}",
            z.nrows()
        )));
    }
    let raw = DMatrix::from_fn(num_aps, num_ues, |m, k| {
        let e = k * num_aps + m;
        Complex64::new(z[(0, e)], z[(1, e)])
    });
    Ok(ForwardTrace {
        num_aps,
        num_ues,
        layers: caches,
        raw,
    })
}

/// Map a channel to a power-normalized precoder.
///
/// Layers `1..L-1` use LeakyReLU; the last layer is linear and its two output
/// channels are read as `Re` and `Im` of `w_{m,k}`.
pub fn forward(g: &ChannelMatrix, params: &GnnParams, total_power: f64) -> Result<PrecodingMatrix> {
    let trace = forward_trace(g, params)?;
    normalize_power(trace.raw, total_power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSource;
    use crate::gnn::aggregate_node_messages;
    use crate::gnn::graph::Node;
    use crate::gnn::params::init_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channel(rng: &mut ChaCha8Rng, k: usize, m: usize) -> ChannelMatrix {
        ChannelMatrix::new(
            DMatrix::from_fn(k, m, |_, _| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            }),
            ChannelSource::Synthetic,
        )
        .unwrap()
    }

    fn random_layer(rng: &mut ChaCha8Rng, d_out: usize, d_in: usize) -> LayerParams {
        let mut draw = || DMatrix::from_fn(d_out, d_in, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        LayerParams {
            edge: draw(),
            ap: draw(),
            ue: draw(),
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let graph = build_edge_graph(&random_channel(&mut rng, 2, 3), 1.0).unwrap();
        let out = layer_forward(
            &graph,
            &LayerParams::zeros(4, 2),
            Activation::LeakyRelu(0.01),
            Aggregation::Inclusive,
        )
        .unwrap();
        assert!(out.features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_edge_weight_passes_positive_features() {
        let features = DMatrix::from_fn(2, 6, |i, j| 0.5 + (i + 2 * j) as f64);
        let graph = EdgeGraph::from_features(3, 2, features.clone(), 1.0).unwrap();
        let mut layer = LayerParams::zeros(2, 2);
        layer.edge = DMatrix::identity(2, 2);
        let out = layer_forward(&graph, &layer, Activation::LeakyRelu(0.01), Aggregation::Inclusive).unwrap();
        assert_eq!(out.features(), &features);
    }

    #[test]
    fn single_edge_hand_computation() {
        // One AP, one UE: both messages equal the lone edge feature z = [1, -2].
        let graph = EdgeGraph::from_features(1, 1, DMatrix::from_column_slice(2, 1, &[1.0, -2.0]), 1.0).unwrap();
        let layer = LayerParams {
            edge: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]),
            ap: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 1.0, 1.0]),
            ue: DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 2.0, 0.0]),
        };
        // W_edge z = [-3, -2], W_ap z = [0.5, -1], W_ue z = [2, 2]; sum = [-0.5, -1].
        let out = layer_forward(&graph, &layer, Activation::LeakyRelu(0.1), Aggregation::Inclusive).unwrap();
        assert!((out.feature(0, 0)[0] - (-0.05)).abs() < 1e-15);
        assert!((out.feature(0, 0)[1] - (-0.1)).abs() < 1e-15);
        let lin = layer_forward(&graph, &layer, Activation::Identity, Aggregation::Inclusive).unwrap();
        assert_eq!(lin.feature(0, 0), &[-0.5, -1.0]);
    }

    /// Straight per-edge evaluation over an arbitrary visiting order, reading
    /// only from the input snapshot.
    fn per_edge_reference(
        graph: &EdgeGraph,
        layer: &LayerParams,
        slope: f64,
        order: &[(usize, usize)],
    ) -> DMatrix<f64> {
        let d_out = layer.out_dim();
        let mut out = DMatrix::zeros(d_out, graph.num_edges());
        for &(m, k) in order {
            let z = nalgebra::DVector::from_column_slice(graph.feature(m, k));
            let ap = nalgebra::DVector::from_vec(aggregate_node_messages(graph, Node::Ap(m)).unwrap());
            let ue = nalgebra::DVector::from_vec(aggregate_node_messages(graph, Node::Ue(k)).unwrap());
            let pre = &layer.edge * z + &layer.ap * ap + &layer.ue * ue;
            let e = graph.edge_index(m, k);
            for i in 0..d_out {
                out[(i, e)] = Activation::LeakyRelu(slope).apply(pre[i]);
            }
        }
        out
    }

    #[test]
    fn update_is_synchronous_and_order_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (k, m) = (3, 5);
        let graph =
            EdgeGraph::from_features(m, k, DMatrix::from_fn(4, k * m, |_, _| rng.random::<f64>() - 0.5), 1.0).unwrap();
        let layer = random_layer(&mut rng, 6, 4);
        let mut forward_order: Vec<_> = (0..k).flat_map(|ue| (0..m).map(move |ap| (ap, ue))).collect();
        let a = per_edge_reference(&graph, &layer, 0.2, &forward_order);
        forward_order.reverse();
        let b = per_edge_reference(&graph, &layer, 0.2, &forward_order);
        let fast = layer_forward(&graph, &layer, Activation::LeakyRelu(0.2), Aggregation::Inclusive).unwrap();
        assert_eq!(a, b);
        assert!((fast.features() - a).abs().max() < 1e-12);
    }

    #[test]
    fn exclusive_messages_skip_own_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (k, m) = (3, 4);
        let features = DMatrix::from_fn(2, k * m, |_, _| rng.random::<f64>() - 0.5);
        let graph = EdgeGraph::from_features(m, k, features.clone(), 1.0).unwrap();
        let mut layer = LayerParams::zeros(2, 2);
        layer.ap = DMatrix::identity(2, 2);
        let out = layer_forward(&graph, &layer, Activation::Identity, Aggregation::Exclusive).unwrap();
        for ue in 0..k {
            for ap in 0..m {
                for i in 0..2 {
                    let others: f64 = (0..k).filter(|&u| u != ue).map(|u| features[(i, u * m + ap)]).sum();
                    assert!((out.feature(ap, ue)[i] - others / (k - 1) as f64).abs() < 1e-14);
                }
            }
        }
        // A lone UE has no other edges at its AP: the AP message vanishes.
        let single = EdgeGraph::from_features(2, 1, features.columns(0, 2).into_owned(), 1.0).unwrap();
        let out = layer_forward(&single, &layer, Activation::Identity, Aggregation::Exclusive).unwrap();
        assert!(out.features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let graph = EdgeGraph::from_features(1, 1, DMatrix::zeros(3, 1), 1.0).unwrap();
        assert!(matches!(
            layer_forward(
                &graph,
                &LayerParams::zeros(2, 2),
                Activation::Identity,
                Aggregation::Inclusive
            ),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn forward_meets_power_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = init_params(16, &mut rng, 0.01).unwrap();
        for (k, m) in [(1, 1), (2, 3), (4, 8), (2, 33)] {
            let g = random_channel(&mut rng, k, m);
            let w = forward(&g, &params, 2.5).unwrap();
            assert_eq!(w.entries().shape(), (m, k));
            assert!((w.trace_power() - 2.5).abs() <= 1e-9 * 2.5);
            assert_eq!(w, forward(&g, &params, 2.5).unwrap());
        }
    }

    #[test]
    fn zero_readout_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = init_params(4, &mut rng, 0.01).unwrap();
        params.layers[7] = LayerParams::zeros(2, 4);
        let g = random_channel(&mut rng, 2, 3);
        assert!(matches!(forward(&g, &params, 1.0), Err(Error::DegeneratePrecoder)));
    }

    #[test]
    fn forward_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let params = init_params(8, &mut rng, 0.01).unwrap();
        let g = random_channel(&mut rng, 3, 5);
        let w = forward(&g, &params, 1.0).unwrap();
        let ue_order = [1, 2, 0];
        let ap_order = [3, 0, 4, 2, 1];
        let wp = forward(&g.permuted(&ue_order, &ap_order), &params, 1.0).unwrap();
        let expected = w.permuted(&ue_order, &ap_order);
        assert!((wp.entries() - expected.entries()).norm() < 1e-9);
    }
}
