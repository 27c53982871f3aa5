//! Steering vectors, Rician sampling, and construction of one channel
//! realization for a scenario.
//!
//! User links (`h_dk`, `h_rk`) and the BS-RIS matrix `G` follow Rician
//! fading; both target links are pure LoS. All draws go through the caller's
//! RNG, and the sampling order is fixed (`G`, then `h_dk` for k = 0..K, then
//! `h_rk` for k = 0..K) so a seed pins the whole realization bit-exactly.

use crate::config::{pathloss_amplitude, SystemConfig};
use crate::geometry::{derive_geometry, SystemGeometry};
use crate::{CMat, CVec, Cf64, IsacError, Result};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// One realization of every channel in the system.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// BS-user channels, K vectors of length M.
    pub h_dk: Vec<CVec>,
    /// RIS-user channels, K vectors of length N.
    pub h_rk: Vec<CVec>,
    /// BS-RIS channel, N x M.
    pub g: CMat,
    /// BS-target channel (pure LoS), length M.
    pub h_dt: CVec,
    /// RIS-target channel (pure LoS), length N.
    pub h_rt: CVec,
    /// Target DoA at the BS.
    pub theta_1: f64,
    /// Target DoA at the RIS.
    pub theta_2: f64,
    /// Complex path gain of the BS-target link.
    pub alpha_dt: Cf64,
    /// Complex path gain of the RIS-target link.
    pub alpha_rt: Cf64,
}

/// ULA steering vector with half-wavelength spacing:
/// entry `i` is `exp(-j pi i sin theta)`.
pub fn steering_vector(n: usize, theta: f64) -> CVec {
    let s = theta.sin();
    CVec::from_fn(n, |i, _| Cf64::from_polar(1.0, -PI * i as f64 * s))
}

/// Sample a Rician-faded matrix `pathloss * (sqrt(k/(1+k)) los + sqrt(1/(1+k)) nlos)`
/// where `nlos` has i.i.d. CN(0, 1) entries. `kappa = inf` returns the pure
/// LoS matrix `pathloss * los` without consuming randomness.
pub fn sample_rician<R: Rng>(
    rows: usize,
    cols: usize,
    pathloss: f64,
    kappa: f64,
    los: &CMat,
    rng: &mut R,
) -> Result<CMat> {
    if los.nrows() != rows || los.ncols() != cols {
        return Err(IsacError::Shape(format!(
            "LoS matrix is {}x{}, expected {}x{}",
            los.nrows(),
            los.ncols(),
            rows,
            cols
        )));
    }
    if kappa.is_infinite() {
        return Ok(los.map(|z| z * pathloss));
    }
    let w_los = (kappa / (kappa + 1.0)).sqrt();
    let w_nlos = (1.0 / (kappa + 1.0)).sqrt();
    // Real/imag parts i.i.d. N(0, 1/2) so each entry has unit variance.
    // Row-major fill order is part of the reproducibility contract: growing
    // a matrix along its row dimension (more RIS elements) keeps the
    // existing rows' draws, so sweeps over N use nested realizations.
    let mut nlos = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            nlos[(r, c)] = Cf64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        }
    }
    Ok(los.map(|z| z * (pathloss * w_los)) + nlos * Cf64::new(pathloss * w_nlos, 0.0))
}

/// Build every channel of one realization from config and derived geometry.
///
/// Each link family draws from its own stream (seeded off the caller's RNG
/// in a fixed order), so the direct-link realizations do not depend on `N`.
pub fn build_channel_set<R: Rng>(
    cfg: &SystemConfig,
    geo: &SystemGeometry,
    rng: &mut R,
) -> Result<ChannelSet> {
    use rand_chacha::ChaCha12Rng;
    let mut rng_g = ChaCha12Rng::seed_from_u64(rng.gen());
    let mut rng_dk = ChaCha12Rng::seed_from_u64(rng.gen());
    let mut rng_rk = ChaCha12Rng::seed_from_u64(rng.gen());
    let rng = &mut rng_g;
    let exps = &cfg.pathloss_exponents;
    let m = cfg.m;
    let n = cfg.n;

    // BS-RIS matrix: LoS component a_N(theta_RB) a_M(theta_BR)^T.
    let a_ris = steering_vector(n, cfg.theta_rb);
    let a_bs = steering_vector(m, cfg.theta_br);
    let g_los = &a_ris * a_bs.transpose();
    let g = sample_rician(
        n,
        m,
        pathloss_amplitude(cfg.d_br, exps.bs_ris),
        cfg.kappa,
        &g_los,
        rng,
    )?;

    let mut h_dk = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let los = CMat::from_column_slice(m, 1, steering_vector(m, geo.theta_bu[k]).as_slice());
        let h = sample_rician(
            m,
            1,
            pathloss_amplitude(geo.d_bu[k], exps.bs_user),
            cfg.kappa,
            &los,
            &mut rng_dk,
        )?;
        h_dk.push(CVec::from_column_slice(h.as_slice()));
    }

    let mut h_rk = Vec::with_capacity(cfg.k);
    // Per-user substreams keep each user's RIS link nested across N too.
    let user_seeds: Vec<u64> = (0..cfg.k).map(|_| rng_rk.gen()).collect();
    for (&seed, &psi) in user_seeds.iter().zip(geo.psi_users.iter()) {
        let mut rng_user = ChaCha12Rng::seed_from_u64(seed);
        let los = CMat::from_column_slice(n, 1, steering_vector(n, psi).as_slice());
        let h = sample_rician(
            n,
            1,
            pathloss_amplitude(cfg.d_ru, exps.ris_user),
            cfg.kappa,
            &los,
            &mut rng_user,
        )?;
        h_rk.push(CVec::from_column_slice(h.as_slice()));
    }

    let alpha_dt = Cf64::new(pathloss_amplitude(geo.d_bt, exps.bs_target), 0.0);
    let alpha_rt = Cf64::new(pathloss_amplitude(cfg.d_rt, exps.ris_target), 0.0);
    let h_dt = steering_vector(m, geo.theta_1).map(|z| z * alpha_dt);
    let h_rt = steering_vector(n, cfg.theta_2).map(|z| z * alpha_rt);

    Ok(ChannelSet {
        h_dk,
        h_rk,
        g,
        h_dt,
        h_rt,
        theta_1: geo.theta_1,
        theta_2: cfg.theta_2,
        alpha_dt,
        alpha_rt,
    })
}

/// Derive geometry and sample channels in one call.
pub fn realize<R: Rng>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelSet> {
    let geo = derive_geometry(cfg)?;
    build_channel_set(cfg, &geo, rng)
}
