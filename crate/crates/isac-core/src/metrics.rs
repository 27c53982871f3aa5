//! Performance metrics: composite channels, per-user SINR and sum-rate, the
//! worst-case radar SNR bound, detection probability, and the transmit
//! beampattern.
//!
//! Everything here is a pure function of a channel realization and a design
//! point, so the optimizers' results can be re-verified independently of
//! their internal bookkeeping.

use crate::channel::{steering_vector, ChannelSet};
use crate::{CMat, CVec, IsacError, Result};

/// A complete design point: transmit beamformer, RIS reflection coefficients,
/// and radar receive filter.
#[derive(Debug, Clone)]
pub struct DesignVariables {
    /// Transmit beamformer, M x (K+M); the first K columns carry user symbols.
    pub w: CMat,
    /// RIS reflection coefficients, length N, unit modulus.
    pub phi: CVec,
    /// Radar receive filter, length M(K+M).
    pub u: CVec,
}

/// One per-iteration record of an optimizer run.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub sum_rate: f64,
    /// Radar SNR bound (SNR mode) or CRB (CRB mode) at this iterate.
    pub constraint_value: f64,
    /// Largest equality-constraint residual of the splitting variables.
    pub residual: f64,
    /// Current (smallest) penalty parameter.
    pub penalty: f64,
}

/// Iteration trace of one optimizer run; the unit of convergence testing and
/// CSV export.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub records: Vec<IterRecord>,
    pub converged: bool,
    /// Set when the run hit `max_iters` and returned its best iterate.
    pub flagged: bool,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_sum_rate(&self) -> f64 {
        self.records.last().map(|r| r.sum_rate).unwrap_or(0.0)
    }
}

/// Composite BS-user channel `h_k(phi) = h_dk + G^T diag(phi) h_rk`.
pub fn composite_user_channel(ch: &ChannelSet, phi: &CVec, k: usize) -> Result<CVec> {
    if k >= ch.h_dk.len() {
        return Err(IsacError::Index(format!(
            "user index {k} out of range (K = {})",
            ch.h_dk.len()
        )));
    }
    let scaled = CVec::from_fn(ch.h_rk[k].len(), |i, _| phi[i] * ch.h_rk[k][i]);
    Ok(&ch.h_dk[k] + ch.g.transpose() * scaled)
}

/// Effective BS-target vector `v = h_dt + G^T diag(phi) h_rt`; the two-hop
/// echo channel is its outer product.
pub fn target_channel_vector(ch: &ChannelSet, phi: &CVec) -> CVec {
    let scaled = CVec::from_fn(ch.h_rt.len(), |i, _| phi[i] * ch.h_rt[i]);
    &ch.h_dt + ch.g.transpose() * scaled
}

/// Echo channel `H_t(phi) = v v^T` (plain transpose, not conjugate).
pub fn target_channel_matrix(ch: &ChannelSet, phi: &CVec) -> CMat {
    let v = target_channel_vector(ch, phi);
    &v * v.transpose()
}

/// SINR of user k under beamformer `w` (columns j are interferers for j != k).
pub fn sinr(w: &CMat, phi: &CVec, ch: &ChannelSet, noise: &[f64], k: usize) -> Result<f64> {
    let h = composite_user_channel(ch, phi, k)?;
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..w.ncols() {
        let gain = h.dot(&w.column(j).into_owned()).norm_sqr();
        if j == k {
            signal = gain;
        } else {
            interference += gain;
        }
    }
    Ok(signal / (interference + noise[k]))
}

/// Achievable sum-rate `sum_k log2(1 + SINR_k)` in bits/s/Hz. The sum runs
/// over the K users only; radar-stream columns contribute interference.
pub fn sum_rate(w: &CMat, phi: &CVec, ch: &ChannelSet, noise: &[f64]) -> Result<f64> {
    let mut rate = 0.0;
    for k in 0..ch.h_dk.len() {
        rate += (1.0 + sinr(w, phi, ch, noise, k)?).log2();
    }
    Ok(rate)
}

/// `(I_{K+M} (x) H_t(phi)) w` evaluated as `vec(H_t W)` without forming the
/// Kronecker product.
pub fn target_response(w: &CMat, phi: &CVec, ch: &ChannelSet) -> CVec {
    let ht = target_channel_matrix(ch, phi);
    let prod = ht * w;
    CVec::from_column_slice(prod.as_slice())
}

/// Worst-case (Jensen) radar SNR
/// `L sigma_t^2 |u^H (I (x) H_t) w|^2 / (sigma_r^2 u^H u)`.
pub fn radar_snr_lower_bound(
    w: &CMat,
    u: &CVec,
    phi: &CVec,
    ch: &ChannelSet,
    l: usize,
    sigma_t2: f64,
    sigma_r2: f64,
) -> Result<f64> {
    let uu = u.norm_squared();
    if uu == 0.0 {
        return Err(IsacError::Solver(
            "receive filter u must be nonzero".to_string(),
        ));
    }
    let z = target_response(w, phi, ch);
    let num = u.dotc(&z).norm_sqr();
    Ok(l as f64 * sigma_t2 * num / (sigma_r2 * uu))
}

/// Detection probability of the chi-squared(2) energy detector at false-alarm
/// rate `pfa`: `P_D = 1 - F(eta0/eta1 * F^{-1}(1 - pfa))`. With the
/// closed-form CDF `F(x) = 1 - exp(-x/2)` this reduces to
/// `pfa^(eta0/eta1)`.
pub fn detection_probability(eta0: f64, eta1: f64, pfa: f64) -> Result<f64> {
    if !(eta0 > 0.0) || !(eta1 > 0.0) {
        return Err(IsacError::Config(
            "eta0 and eta1 must be strictly positive".to_string(),
        ));
    }
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(IsacError::Config("pfa must lie in (0, 1)".to_string()));
    }
    Ok(pfa.powf(eta0 / eta1))
}

/// Transmit beampattern `a_M^H(theta) W W^H a_M(theta)` over a grid of angles.
pub fn transmit_beampattern(w: &CMat, grid: &[f64]) -> Vec<f64> {
    let m = w.nrows();
    grid.iter()
        .map(|&theta| {
            let a = steering_vector(m, theta);
            (0..w.ncols())
                .map(|j| a.dotc(&w.column(j).into_owned()).norm_sqr())
                .sum()
        })
        .collect()
}

/// Uniform angle grid over [-pi/2, pi/2] used for beampattern export.
pub fn beampattern_grid(points: usize) -> Vec<f64> {
    let half = std::f64::consts::FRAC_PI_2;
    (0..points)
        .map(|i| -half + 2.0 * half * i as f64 / (points.max(2) - 1) as f64)
        .collect()
}
