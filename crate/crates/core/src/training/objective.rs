//! Negative mean sum rate and its exact reverse-mode gradient.
//!
//! Backward pass for one channel `G` (all gradients are of the sum rate `R`):
//!
//! 1. With `P_kl = |T_kl|^2`, `T = G V`, `D_k = sum_l P_kl + sigma^2` and
//!    `N_k = D_k - P_kk`, the rate is `R = sum_k (ln D_k - ln N_k) / ln 2`, so
//!    `dR/dP_kk = 1 / (D_k ln 2)` and `dR/dP_kl = (1/D_k - 1/N_k) / ln 2`.
//! 2. Complex gradients are packed as `df/dRe + i df/dIm`; then
//!    `grad T_kl = 2 (dR/dP_kl) T_kl` and `grad V = G^H grad T`.
//! 3. `V = sqrt(P_T) W / |W|_F`, whose Jacobian is a scaled projection:
//!    `grad W = alpha (grad V - W_hat Re<W_hat, grad V>)`.
//! 4. Readout channel 0/1 of edge `(m, k)` receive `Re`/`Im` of `grad W_{m,k}`,
//!    then each layer is unwound in reverse order.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{ChannelMatrix, LinkBudget};
use crate::error::{Error, Result};
use crate::gnn::{forward, forward_trace, message_coefficients, ForwardTrace, GnnParams, LayerParams};
use crate::precoders::{frobenius_sqr, sum_rate};

/// One gradient matrix per weight matrix, mirroring [`GnnParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerParams>,
}

impl GradientSet {
    pub fn zeros_like(params: &GnnParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.out_dim(), l.in_dim()))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &GradientSet, factor: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (wa, wb) in a.matrices_mut().into_iter().zip(b.matrices()) {
                wa.zip_apply(wb, |x, y| *x += factor * y);
            }
        }
    }

    /// Flat view in layer order, then edge/ap/ue, each column-major.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.matrices().into_iter().flat_map(|w| w.iter().copied()))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// `-(1/|batch|) * sum of sum rates` of the GNN precoder.
pub fn loss(batch: &[ChannelMatrix], params: &GnnParams, budget: &LinkBudget) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for g in batch {
        let w = forward(g, params, budget.total_power)?;
        total += sum_rate(g, &w, budget.noise_variance)?.sum_rate;
    }
    Ok(-total / batch.len() as f64)
}

pub fn gradients(batch: &[ChannelMatrix], params: &GnnParams, budget: &LinkBudget) -> Result<GradientSet> {
    Ok(loss_and_gradients(batch, params, budget)?.1)
}

/// Loss and its gradient in one pass. Per-sample contributions are reduced
/// in batch order.
pub fn loss_and_gradients(
    batch: &[ChannelMatrix],
    params: &GnnParams,
    budget: &LinkBudget,
) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let weight = -1.0 / batch.len() as f64;
    let mut grads = GradientSet::zeros_like(params);
    let mut total = 0.0;
    for g in batch {
        let (rate, sample) = rate_and_gradient(g, params, budget)?;
        total += rate;
        grads.add_scaled(&sample, weight);
    }
    Ok((total * weight, grads))
}

/// Sum rate of one channel and its gradient with respect to every weight.
pub fn rate_and_gradient(g: &ChannelMatrix, params: &GnnParams, budget: &LinkBudget) -> Result<(f64, GradientSet)> {
    let trace = forward_trace(g, params)?;
    let (rate, grad_raw) = rate_backward(g, &trace.raw, budget)?;
    let grads = backward_layers(&trace, params, &grad_raw)?;
    Ok((rate, grads))
}

/// Sum rate of the normalized `raw` precoder and its gradient w.r.t. `raw`.
fn rate_backward(
    g: &ChannelMatrix,
    raw: &DMatrix<Complex64>,
    budget: &LinkBudget,
) -> Result<(f64, DMatrix<Complex64>)> {
    let sigma2 = budget.noise_variance;
    let norm_sq = frobenius_sqr(raw);
    if norm_sq == 0.0 {
        return Err(Error::DegeneratePrecoder);
    }
    let norm = norm_sq.sqrt();
    let alpha = (budget.total_power / norm_sq).sqrt();
    let v = raw * Complex64::new(alpha, 0.0);
    let t = g.entries() * &v;
    let k = t.nrows();
    let ln2 = std::f64::consts::LN_2;

    let mut rate = 0.0;
    let mut grad_t = DMatrix::<Complex64>::zeros(k, k);
    for ue in 0..k {
        let total: f64 = (0..k).map(|l| t[(ue, l)].norm_sqr()).sum::<f64>() + sigma2;
        let signal = t[(ue, ue)].norm_sqr();
        let rest = total - signal;
        rate += (total.ln() - rest.ln()) / ln2;
        for l in 0..k {
            let coeff = if l == ue {
                1.0 / (total * ln2)
            } else {
                (1.0 / total - 1.0 / rest) / ln2
            };
            grad_t[(ue, l)] = t[(ue, l)] * (2.0 * coeff);
        }
    }
    let grad_v = g.entries().adjoint() * grad_t;

    let unit = raw * Complex64::new(1.0 / norm, 0.0);
    let radial: f64 = unit.iter().zip(grad_v.iter()).map(|(u, gv)| (u.conj() * gv).re).sum();
    let grad_raw = (grad_v - unit * Complex64::new(radial, 0.0)) * Complex64::new(alpha, 0.0);
    if !rate.is_finite() || grad_raw.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NumericalFailure {
            stage: "rate objective".into(),
            detail: "non-finite rate or gradient".into(),
        });
    }
    Ok((rate, grad_raw))
}

fn backward_layers(trace: &ForwardTrace, params: &GnnParams, grad_raw: &DMatrix<Complex64>) -> Result<GradientSet> {
    let (num_aps, num_ues) = (trace.num_aps, trace.num_ues);
    let num_edges = num_aps * num_ues;
    let mut grad_out = DMatrix::zeros(2, num_edges);
    for k in 0..num_ues {
        for m in 0..num_aps {
            let e = k * num_aps + m;
            grad_out[(0, e)] = grad_raw[(m, k)].re;
            grad_out[(1, e)] = grad_raw[(m, k)].im;
        }
    }

    let (a_ap, b_ap) = message_coefficients(num_ues, params.aggregation);
    let (a_ue, b_ue) = message_coefficients(num_aps, params.aggregation);
    let mut grads = GradientSet::zeros_like(params);

    for (l, (cache, layer)) in trace.layers.iter().zip(&params.layers).enumerate().rev() {
        let mut grad_pre = grad_out;
        grad_pre.zip_apply(&cache.pre, |g, x| *g *= cache.activation.derivative(x));

        let d_out = layer.out_dim();
        let mut grad_ap_term = DMatrix::zeros(d_out, num_aps);
        let mut grad_ue_term = DMatrix::zeros(d_out, num_ues);
        {
            let gp = grad_pre.as_slice();
            let ga = grad_ap_term.as_mut_slice();
            let gu = grad_ue_term.as_mut_slice();
            for k in 0..num_ues {
                for m in 0..num_aps {
                    let e = k * num_aps + m;
                    let col = &gp[e * d_out..(e + 1) * d_out];
                    for (i, v) in col.iter().enumerate() {
                        ga[m * d_out + i] += v;
                        gu[k * d_out + i] += v;
                    }
                }
            }
        }

        let grad_eff = &grad_pre * cache.input.transpose();
        let out = &mut grads.layers[l];
        out.edge += &grad_eff;
        out.ap += &grad_ap_term * cache.ap_sums.transpose() * a_ap;
        out.ue += &grad_ue_term * cache.ue_sums.transpose() * a_ue;
        if b_ap != 0.0 {
            out.ap += &grad_eff * b_ap;
        }
        if b_ue != 0.0 {
            out.ue += &grad_eff * b_ue;
        }

        if l == 0 {
            break;
        }

        let mut w_eff = layer.edge.clone();
        if b_ap != 0.0 {
            w_eff += &layer.ap * b_ap;
        }
        if b_ue != 0.0 {
            w_eff += &layer.ue * b_ue;
        }
        let mut grad_in = w_eff.transpose() * &grad_pre;
        let grad_ap_sums = layer.ap.transpose() * grad_ap_term * a_ap;
        let grad_ue_sums = layer.ue.transpose() * grad_ue_term * a_ue;
        let d_in = layer.in_dim();
        {
            let gi = grad_in.as_mut_slice();
            let ga = grad_ap_sums.as_slice();
            let gu = grad_ue_sums.as_slice();
            for k in 0..num_ues {
                for m in 0..num_aps {
                    let e = k * num_aps + m;
                    for i in 0..d_in {
                        gi[e * d_in + i] += ga[m * d_in + i] + gu[k * d_in + i];
                    }
                }
            }
        }
        if grad_in.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                stage: format!("layer {} backward", l + 1),
                detail: "non-finite gradient".into(),
            });
        }
        grad_out = grad_in;
    }
    Ok(grads)
}
