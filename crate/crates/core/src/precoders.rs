//! Closed-form precoders and rate metrics.
//!
//! Both baselines share the joint total-power normalization
//! `W = alpha * W_raw`, `alpha = sqrt(P_T / tr(W_raw W_raw^H))`:
//!
//! * conjugate beamforming: `W_raw = G^H`
//! * zero forcing: `W_raw = G^H (G G^H)^{-1}`
//!
//! SINR uses the unconjugated inner product `g_k^T w_l` between row `k` of the
//! `K x M` channel and column `l` of the `M x K` precoder.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};

/// Default rejection bound on `cond(G G^H)` for zero forcing.
pub const DEFAULT_MAX_GRAM_CONDITION: f64 = 1e12;

/// `M x K` precoder normalized to a total transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix {
    entries: DMatrix<Complex64>,
    total_power: f64,
    scale: f64,
}

impl PrecodingMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    /// The factor `alpha` applied to the raw matrix.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn num_aps(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.entries.ncols()
    }

    /// `tr(W W^H)`, i.e. the squared Frobenius norm.
    pub fn trace_power(&self) -> f64 {
        frobenius_sqr(&self.entries)
    }

    /// Same reordering convention as [`ChannelMatrix::permuted`]: rows follow
    /// `ap_order`, columns follow `ue_order`.
    pub fn permuted(&self, ue_order: &[usize], ap_order: &[usize]) -> Self {
        Self {
            entries: DMatrix::from_fn(ap_order.len(), ue_order.len(), |i, j| {
                self.entries[(ap_order[i], ue_order[j])]
            }),
            ..*self
        }
    }

    /// Wrap a matrix without renormalizing. Intended for tests and for
    /// evaluating externally produced precoders.
    pub fn from_raw_unchecked(entries: DMatrix<Complex64>, total_power: f64) -> Self {
        Self {
            entries,
            total_power,
            scale: 1.0,
        }
    }
}

pub(crate) fn frobenius_sqr(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn normalize_power(w_raw: DMatrix<Complex64>, total_power: f64) -> Result<PrecodingMatrix> {
    if !(total_power > 0.0 && total_power.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "total power must be positive, got {total_power}"
        )));
    }
    let trace = frobenius_sqr(&w_raw);
    if !trace.is_finite() {
        return Err(Error::NumericalFailure {
            stage: "power normalization".into(),
            detail: "non-finite precoder entries".into(),
        });
    }
    if trace == 0.0 {
        return Err(Error::DegeneratePrecoder);
    }
    let scale = (total_power / trace).sqrt();
    Ok(PrecodingMatrix {
        entries: w_raw * Complex64::new(scale, 0.0),
        total_power,
        scale,
    })
}

pub fn conjugate_beamforming(g: &ChannelMatrix, total_power: f64) -> Result<PrecodingMatrix> {
    normalize_power(g.entries().adjoint(), total_power)
}

pub fn zero_forcing(g: &ChannelMatrix, total_power: f64) -> Result<PrecodingMatrix> {
    zero_forcing_with(g, total_power, DEFAULT_MAX_GRAM_CONDITION)
}

/// Zero forcing with an explicit bound on `cond(G G^H)`.
///
/// With the thin QR factorization `G^H = Q R` the Gram matrix is `R^H R`, so
/// the pseudo-inverse reduces to `G^H (G G^H)^{-1} = Q R^{-H}`, which needs
/// only one triangular solve.
pub fn zero_forcing_with(g: &ChannelMatrix, total_power: f64, max_gram_condition: f64) -> Result<PrecodingMatrix> {
    let (k, m) = (g.num_ues(), g.num_aps());
    if k > m {
        return Err(Error::SingularChannel(format!(
            "zero forcing needs K <= M, got K={k}, M={m}"
        )));
    }
    let cond = gram_condition(g);
    if cond.is_nan() || cond > max_gram_condition {
        return Err(Error::SingularChannel(format!(
            "cond(G G^H) = {cond:e} exceeds {max_gram_condition:e}"
        )));
    }
    let qr = g.entries().adjoint().qr();
    let (q, r) = (qr.q(), qr.r());
    let x = r
        .solve_upper_triangular(&q.adjoint())
        .ok_or_else(|| Error::SingularChannel("triangular factor of the Gram matrix is singular".into()))?;
    normalize_power(x.adjoint(), total_power)
}

/// Condition number of the `K x K` Gram matrix `G G^H`, from the singular
/// values of `G`. Infinite when `G` is rank deficient.
pub fn gram_condition(g: &ChannelMatrix) -> f64 {
    let sv = g.entries().clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        return f64::INFINITY;
    }
    let ratio = max / min;
    ratio * ratio
}

/// `T = G W`, entry `(k, l)` is `g_k^T w_l`.
pub fn effective_channel(g: &ChannelMatrix, w: &PrecodingMatrix) -> Result<DMatrix<Complex64>> {
    if g.num_aps() != w.num_aps() || g.num_ues() != w.num_ues() {
        return Err(Error::InvalidArgument(format!(
            "channel is {}x{} but precoder is {}x{}",
            g.num_ues(),
            g.num_aps(),
            w.num_aps(),
            w.num_ues()
        )));
    }
    Ok(g.entries() * w.entries())
}

pub fn sinr_per_ue(g: &ChannelMatrix, w: &PrecodingMatrix, noise_variance: f64) -> Result<Vec<f64>> {
    if noise_variance.is_nan() || noise_variance <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    let t = effective_channel(g, w)?;
    let k = t.nrows();
    Ok((0..k)
        .map(|ue| {
            let signal = t[(ue, ue)].norm_sqr();
            let interference: f64 = (0..k).filter(|&l| l != ue).map(|l| t[(ue, l)].norm_sqr()).sum();
            signal / (interference + noise_variance)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub sinr_per_ue: Vec<f64>,
    pub rate_per_ue: Vec<f64>,
    pub sum_rate: f64,
}

impl RateReport {
    pub fn from_sinr(sinr_per_ue: Vec<f64>) -> Self {
        let rate_per_ue: Vec<f64> = sinr_per_ue.iter().map(|s| (1.0 + s).log2()).collect();
        let sum_rate = rate_per_ue.iter().sum();
        Self {
            sinr_per_ue,
            rate_per_ue,
            sum_rate,
        }
    }
}

pub fn sum_rate(g: &ChannelMatrix, w: &PrecodingMatrix, noise_variance: f64) -> Result<RateReport> {
    Ok(RateReport::from_sinr(sinr_per_ue(g, w, noise_variance)?))
}
