//! Fractional-programming reformulation of the sum-rate objective.
//!
//! With auxiliaries `r` (per-user SINR surrogates) and `c` (quadratic
//! transform), the objective becomes
//!
//! ```text
//! F(w, phi, r, c) = sum_k log2(1+r_k) - sum_k r_k - sum_k |c_k|^2 sigma_k^2
//!                 + sum_k 2 sqrt(1+r_k) Re{c_k^* h_k^T(phi) w_k}
//!                 - sum_k |c_k|^2 sum_j |h_k^T(phi) w_j|^2,
//! ```
//!
//! which is quadratic in the stacked beamformer `w = vec(W)` and in `phi`
//! separately. This module supplies the block updates `r*`, `c*` and both
//! compact quadratic forms; the three representations of `F` must agree to
//! 1e-9 relative (tested here), which pins down every sign and conjugate.

use crate::channel::ChannelSet;
use crate::metrics::{composite_user_channel, sinr};
use crate::{CMat, CVec, Cf64, Result};

/// FP auxiliaries and both compact quadratic forms at one iterate.
#[derive(Debug, Clone)]
pub struct FpState {
    /// SINR auxiliaries, length K, nonnegative.
    pub r: Vec<f64>,
    /// Quadratic-transform auxiliaries, length K.
    pub c: Vec<Cf64>,
    /// Linear term of the w-form, length M(K+M).
    pub a: CVec,
    /// Hermitian PSD Gram of the w-form quadratic (`= B^H B`).
    pub b_gram: CMat,
    /// Constant of the w-form.
    pub eps1: f64,
    /// Linear term of the phi-form, length N.
    pub g: CVec,
    /// Hermitian PSD quadratic of the phi-form.
    pub d: CMat,
    /// Constant of the phi-form.
    pub eps2: f64,
}

/// Stack the beamformer columns into `vec(W)`.
pub fn vec_w(w: &CMat) -> CVec {
    CVec::from_column_slice(w.as_slice())
}

/// Undo [`vec_w`].
pub fn unvec_w(v: &CVec, m: usize) -> CMat {
    CMat::from_column_slice(m, v.len() / m, v.as_slice())
}

/// Optimal FP auxiliary `r_k = SINR_k`.
pub fn update_r(w: &CMat, phi: &CVec, ch: &ChannelSet, noise: &[f64]) -> Result<Vec<f64>> {
    (0..ch.h_dk.len())
        .map(|k| sinr(w, phi, ch, noise, k))
        .collect()
}

/// Optimal quadratic-transform auxiliary
/// `c_k = sqrt(1+r_k) h_k^T w_k / (sum_j |h_k^T w_j|^2 + sigma_k^2)`.
pub fn update_c(
    w: &CMat,
    phi: &CVec,
    ch: &ChannelSet,
    noise: &[f64],
    r: &[f64],
) -> Result<Vec<Cf64>> {
    let mut c = Vec::with_capacity(r.len());
    for k in 0..ch.h_dk.len() {
        let h = composite_user_channel(ch, phi, k)?;
        let mut denom = noise[k];
        let mut num = Cf64::new(0.0, 0.0);
        for j in 0..w.ncols() {
            let gain = h.dot(&w.column(j).into_owned());
            denom += gain.norm_sqr();
            if j == k {
                num = gain;
            }
        }
        c.push(num * (1.0 + r[k]).sqrt() / denom);
    }
    Ok(c)
}

/// Direct evaluation of `F(w, phi, r, c)` from the expanded sum.
pub fn f_direct(
    w: &CMat,
    phi: &CVec,
    ch: &ChannelSet,
    noise: &[f64],
    r: &[f64],
    c: &[Cf64],
) -> Result<f64> {
    let mut f = 0.0;
    for k in 0..ch.h_dk.len() {
        let h = composite_user_channel(ch, phi, k)?;
        let c2 = c[k].norm_sqr();
        f += (1.0 + r[k]).log2() - r[k] - c2 * noise[k];
        for j in 0..w.ncols() {
            let gain = h.dot(&w.column(j).into_owned());
            if j == k {
                f += 2.0 * (1.0 + r[k]).sqrt() * (c[k].conj() * gain).re;
            }
            f -= c2 * gain.norm_sqr();
        }
    }
    Ok(f)
}

/// Compact w-form `(a, B^H B, eps1)` with
/// `F = Re{a^H w} - w^H (B^H B) w + eps1`: the k-th block of `a` is
/// `2 sqrt(1+r_k) c_k h_k^*` (zero for radar columns) and the Gram is
/// `I_{K+M} (x) sum_k |c_k|^2 h_k^* h_k^T`.
pub fn assemble_w_form(
    phi: &CVec,
    ch: &ChannelSet,
    r: &[f64],
    c: &[Cf64],
    noise: &[f64],
    total_cols: usize,
) -> Result<(CVec, CMat, f64)> {
    let m = ch.h_dt.len();
    let kk = ch.h_dk.len();
    let mut q0 = CMat::zeros(m, m);
    let mut a = CVec::zeros(m * total_cols);
    let mut eps1 = 0.0;
    for k in 0..kk {
        let h = composite_user_channel(ch, phi, k)?;
        let hc = h.map(|z| z.conj());
        q0 += &hc * hc.adjoint() * Cf64::new(c[k].norm_sqr(), 0.0);
        let coef = c[k] * 2.0 * (1.0 + r[k]).sqrt();
        for i in 0..m {
            a[k * m + i] = hc[i] * coef;
        }
        eps1 += (1.0 + r[k]).log2() - r[k] - c[k].norm_sqr() * noise[k];
    }
    let mut b_gram = CMat::zeros(m * total_cols, m * total_cols);
    for blk in 0..total_cols {
        b_gram.view_mut((blk * m, blk * m), (m, m)).copy_from(&q0);
    }
    Ok((a, b_gram, eps1))
}

/// Compact phi-form `(g, D, eps2)` with `F = Re{g^H phi} - phi^H D phi + eps2`,
/// built from `h_k^T(phi) w_j = beta_kj + b_kj^T phi` where
/// `beta_kj = h_dk^T w_j` and `b_kj = diag(h_rk) G w_j`.
pub fn assemble_phi_form(
    w: &CMat,
    ch: &ChannelSet,
    r: &[f64],
    c: &[Cf64],
    noise: &[f64],
) -> Result<(CVec, CMat, f64)> {
    let n = ch.h_rt.len();
    let kk = ch.h_dk.len();
    let mut g = CVec::zeros(n);
    let mut d = CMat::zeros(n, n);
    let mut eps2 = 0.0;
    let gw = &ch.g * w; // N x (K+M), column j = G w_j
    for k in 0..kk {
        let c2 = c[k].norm_sqr();
        eps2 += (1.0 + r[k]).log2() - r[k] - c2 * noise[k];
        for j in 0..w.ncols() {
            let beta = ch.h_dk[k].dot(&w.column(j).into_owned());
            let b = CVec::from_fn(n, |i, _| ch.h_rk[k][i] * gw[(i, j)]);
            let bc = b.map(|z| z.conj());
            d += &bc * bc.adjoint() * Cf64::new(c2, 0.0);
            g -= bc.map(|z| z * (2.0 * c2) * beta);
            eps2 -= c2 * beta.norm_sqr();
            if j == k {
                let coef = c[k] * 2.0 * (1.0 + r[k]).sqrt();
                g += bc.map(|z| z * coef);
                eps2 += (coef.conj() * beta).re;
            }
        }
    }
    Ok((g, d, eps2))
}

/// Evaluate the w-form.
pub fn f_w_form(a: &CVec, b_gram: &CMat, eps1: f64, w_vec: &CVec) -> f64 {
    a.dotc(w_vec).re - w_vec.dotc(&(b_gram * w_vec)).re + eps1
}

/// Evaluate the phi-form.
pub fn f_phi_form(g: &CVec, d: &CMat, eps2: f64, phi: &CVec) -> f64 {
    g.dotc(phi).re - phi.dotc(&(d * phi)).re + eps2
}

/// Refresh the FP auxiliaries and both quadratic forms at `(w, phi)`.
pub fn refresh(w: &CMat, phi: &CVec, ch: &ChannelSet, noise: &[f64]) -> Result<FpState> {
    let r = update_r(w, phi, ch, noise)?;
    let c = update_c(w, phi, ch, noise, &r)?;
    let (a, b_gram, eps1) = assemble_w_form(phi, ch, &r, &c, noise, w.ncols())?;
    let (g, d, eps2) = assemble_phi_form(w, ch, &r, &c, noise)?;
    Ok(FpState {
        r,
        c,
        a,
        b_gram,
        eps1,
        g,
        d,
        eps2,
    })
}
