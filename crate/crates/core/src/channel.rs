//! Synthetic channel generation.
//!
//! Channel coefficients follow `g_{m,k} = sqrt(beta_{m,k}) * h_{m,k}` where the
//! large-scale gain comes from the indoor-hotspot NLOS path-loss law
//!
//! ```text
//! PL_dB(d, f_c) = 32.4 + 31.9 log10(d) + 20 log10(f_c)     (d in m, f_c in GHz)
//! ```
//!
//! and `h_{m,k} ~ CN(0, 1)` is i.i.d. Rayleigh fading. Distances are clamped to
//! `d_min` so co-located AP/UE pairs stay finite.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSource {
    Synthetic,
    Measured,
}

/// AP and UE placements in the plane, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
}

impl Geometry {
    pub fn new(ap_positions: Vec<Point>, ue_positions: Vec<Point>) -> Result<Self> {
        if ap_positions.is_empty() || ue_positions.is_empty() {
            return Err(Error::InvalidArgument(
                "geometry needs at least one AP and one UE".into(),
            ));
        }
        let finite = |p: &Point| p[0].is_finite() && p[1].is_finite();
        if !ap_positions.iter().chain(&ue_positions).all(finite) {
            return Err(Error::InvalidArgument("non-finite position".into()));
        }
        Ok(Self {
            ap_positions,
            ue_positions,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    /// Unclamped Euclidean distance between AP `m` and UE `k`.
    pub fn distance(&self, m: usize, k: usize) -> f64 {
        let a = self.ap_positions[m];
        let u = self.ue_positions[k];
        (a[0] - u[0]).hypot(a[1] - u[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossParams {
    pub carrier_ghz: f64,
    pub d_min: f64,
    pub intercept_db: f64,
    pub dist_slope: f64,
    pub freq_slope: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            carrier_ghz: 3.5,
            d_min: 1.0,
            intercept_db: 32.4,
            dist_slope: 31.9,
            freq_slope: 20.0,
        }
    }
}

impl PathLossParams {
    pub fn with_carrier(carrier_ghz: f64) -> Self {
        Self {
            carrier_ghz,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.carrier_ghz,
            self.d_min,
            self.intercept_db,
            self.dist_slope,
            self.freq_slope,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("non-finite path-loss parameter".into()));
        }
        if self.carrier_ghz <= 0.0 {
            return Err(Error::InvalidArgument("carrier_ghz must be > 0".into()));
        }
        if self.d_min <= 0.0 {
            return Err(Error::InvalidArgument("d_min must be > 0".into()));
        }
        Ok(())
    }
}

/// Path loss in dB at `distance_m`, clamped below at `d_min`.
pub fn path_loss_db(distance_m: f64, params: &PathLossParams) -> Result<f64> {
    params.validate()?;
    if !distance_m.is_finite() || distance_m < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "distance must be finite and non-negative, got {distance_m}"
        )));
    }
    let d = distance_m.max(params.d_min);
    Ok(params.intercept_db + params.dist_slope * d.log10() + params.freq_slope * params.carrier_ghz.log10())
}

/// Linear large-scale gain `10^(-PL_dB / 10)`.
pub fn large_scale_gain(distance_m: f64, params: &PathLossParams) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(distance_m, params)? / 10.0))
}

/// A `K x M` complex channel: row `k` holds UE `k`'s coefficients to every AP.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: DMatrix<Complex64>,
    source: ChannelSource,
}

impl ChannelMatrix {
    pub fn new(entries: DMatrix<Complex64>, source: ChannelSource) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidArgument("channel matrix must be non-empty".into()));
        }
        if !entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidArgument("channel matrix has non-finite entries".into()));
        }
        Ok(Self { entries, source })
    }

    /// Build from row-major UE vectors.
    pub fn from_rows(rows: &[Vec<Complex64>], source: ChannelSource) -> Result<Self> {
        let k = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("ragged channel rows".into()));
        }
        Self::new(DMatrix::from_fn(k, m, |i, j| rows[i][j]), source)
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn source(&self) -> ChannelSource {
        self.source
    }

    pub fn num_ues(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.entries.ncols()
    }

    /// Coefficient between AP `m` and UE `k`.
    pub fn get(&self, m: usize, k: usize) -> Complex64 {
        self.entries[(k, m)]
    }

    pub fn mean_entry_power(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.entries.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.map(|z| z * factor),
            source: self.source,
        }
    }

    /// Reorder UEs and APs: output row `i` is input row `ue_order[i]`, output
    /// column `j` is input column `ap_order[j]`.
    pub fn permuted(&self, ue_order: &[usize], ap_order: &[usize]) -> Self {
        Self {
            entries: DMatrix::from_fn(ue_order.len(), ap_order.len(), |i, j| {
                self.entries[(ue_order[i], ap_order[j])]
            }),
            source: self.source,
        }
    }
}

/// Power settings for one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub total_power: f64,
    pub noise_variance: f64,
    pub snr_tx_db: f64,
}

impl LinkBudget {
    pub fn from_snr(total_power: f64, snr_tx_db: f64) -> Result<Self> {
        Ok(Self {
            total_power,
            noise_variance: noise_variance_for_snr(total_power, snr_tx_db)?,
            snr_tx_db,
        })
    }
}

/// `sigma^2 = P_T / 10^(SNR_tx / 10)`.
pub fn noise_variance_for_snr(total_power: f64, snr_tx_db: f64) -> Result<f64> {
    if !(total_power > 0.0 && total_power.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "total power must be positive, got {total_power}"
        )));
    }
    if !snr_tx_db.is_finite() {
        return Err(Error::InvalidArgument("snr must be finite".into()));
    }
    Ok(total_power / 10f64.powf(snr_tx_db / 10.0))
}

/// i.i.d. `CN(0, 1)` entries: real and imaginary parts each `N(0, 1/2)`.
pub fn sample_small_scale<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> Result<DMatrix<Complex64>> {
    if k == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("invalid fading shape {k}x{m}")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // Row-major fill so the draw order does not depend on storage layout.
    let mut data = Vec::with_capacity(k * m);
    for _ in 0..k * m {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        data.push(Complex64::new(re * s, im * s));
    }
    Ok(DMatrix::from_row_slice(k, m, &data))
}

/// Uniform i.i.d. AP then UE placement over `[0, area_side_m]^2`.
pub fn sample_geometry<R: Rng + ?Sized>(area_side_m: f64, m: usize, k: usize, rng: &mut R) -> Result<Geometry> {
    if !(area_side_m > 0.0 && area_side_m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "area side must be positive, got {area_side_m}"
        )));
    }
    let point = |rng: &mut R| [rng.random::<f64>() * area_side_m, rng.random::<f64>() * area_side_m];
    let aps = (0..m).map(|_| point(rng)).collect();
    let ues = (0..k).map(|_| point(rng)).collect();
    Geometry::new(aps, ues)
}

/// Draw fading and combine it with the geometry's large-scale gains.
pub fn generate_channel<R: Rng + ?Sized>(
    geom: &Geometry,
    params: &PathLossParams,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let fading = sample_small_scale(geom.num_ues(), geom.num_aps(), rng)?;
    generate_channel_with_fading(geom, params, &fading)
}

/// Deterministic half of [`generate_channel`] with caller-supplied fading.
pub fn generate_channel_with_fading(
    geom: &Geometry,
    params: &PathLossParams,
    fading: &DMatrix<Complex64>,
) -> Result<ChannelMatrix> {
    let (k, m) = (geom.num_ues(), geom.num_aps());
    if fading.shape() != (k, m) {
        return Err(Error::InvalidArgument(format!(
            "fading shape {:?} does not match geometry {k}x{m}",
            fading.shape()
        )));
    }
    let mut entries = DMatrix::zeros(k, m);
    for ue in 0..k {
        for ap in 0..m {
            let beta = large_scale_gain(geom.distance(ap, ue), params)?;
            entries[(ue, ap)] = fading[(ue, ap)] * beta.sqrt();
        }
    }
    ChannelMatrix::new(entries, ChannelSource::Synthetic)
}
