//! Scenario configuration: all scalars describing one ISAC deployment.
//!
//! A [`SystemConfig`] can be built in code or parsed from a plain-text
//! `key = value` file (`#` starts a comment). Keys are named exactly as the
//! struct fields below; power-like keys also accept dB-suffixed variants
//! (`Pt_dBm`, `sigma_r2_dBm`, `sigma_k2_dBm`, `kappa_dB`, `Gamma_t_dB`).
//! dB-to-linear conversion happens once at parse time; all internal math is
//! in linear units.

use crate::{Cf64, IsacError, Result};
use std::f64::consts::PI;
use std::path::Path;

/// Path-loss exponents per link, in the fixed order used by the scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossExponents {
    pub bs_ris: f64,
    pub ris_target: f64,
    pub ris_user: f64,
    pub bs_target: f64,
    pub bs_user: f64,
}

/// Reference amplitude gain at 1 m: -30 dB power.
pub const C0_AMPLITUDE: f64 = 0.031_622_776_601_683_79; // 10^(-30/20)

/// Distance-dependent path loss as an amplitude gain,
/// `PL(d) = C0 * (d/1m)^(-exponent/2)`.
pub fn pathloss_amplitude(distance_m: f64, exponent: f64) -> f64 {
    C0_AMPLITUDE * distance_m.powf(-exponent / 2.0)
}

/// Convert dBm to linear watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert a dB ratio to linear.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// All scenario scalars for one deployment.
///
/// Sensing thresholds: `gamma_t <= 0` disables the radar-SNR constraint and
/// an infinite `eps_crb` disables the CRB constraint (the corresponding
/// algorithm then runs its communication-only path).
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Transmit (= receive) antenna count at the BS.
    pub m: usize,
    /// Number of single-antenna users.
    pub k: usize,
    /// Number of RIS reflecting elements.
    pub n: usize,
    /// Radar sample count per coherent processing interval.
    pub l: usize,
    /// Transmit power budget in watts.
    pub pt: f64,
    /// Radar receiver noise power (linear).
    pub sigma_r2: f64,
    /// Per-user noise powers (linear), length `k`.
    pub sigma_k2: Vec<f64>,
    /// RCS variance used by the detection-SNR metric.
    pub sigma_t2: f64,
    /// Known complex RCS value used by the CRB.
    pub alpha_t: Cf64,
    /// Rician factor (linear); `f64::INFINITY` means pure LoS.
    pub kappa: f64,
    /// BS-RIS distance in meters.
    pub d_br: f64,
    /// RIS-target distance in meters.
    pub d_rt: f64,
    /// RIS-user distance in meters.
    pub d_ru: f64,
    /// Angle of the RIS as seen from the BS (radians).
    pub theta_br: f64,
    /// Angle of the BS as seen from the RIS (radians).
    pub theta_rb: f64,
    /// Target DoA with respect to the RIS (radians).
    pub theta_2: f64,
    /// Path-loss exponents for the five links.
    pub pathloss_exponents: PathlossExponents,
    /// Radar SNR threshold (linear).
    pub gamma_t: f64,
    /// CRB threshold on the summed DoA variances.
    pub eps_crb: f64,
    /// Initial ADMM penalty value.
    pub penalty_init: f64,
    /// Multiplicative penalty decay per outer iteration.
    pub shrink: f64,
    /// Maximum outer iterations.
    pub max_iters: usize,
    /// Relative sum-rate change threshold for convergence.
    pub tol: f64,
    /// RNG seed for channel realizations.
    pub seed: u64,
    /// Optional user angles around the RIS; evenly spaced in
    /// [-pi/3, pi/3] when absent.
    pub user_angles: Option<Vec<f64>>,
}

impl Default for SystemConfig {
    /// Desk-scale defaults; distances, angles, exponents, noise and Rician
    /// factor follow the reference deployment (50 m BS-RIS link, target 3 m
    /// from the RIS, -90 dBm noise, kappa = 3 dB, Pt = 30 dBm).
    fn default() -> Self {
        Self {
            m: 6,
            k: 4,
            n: 16,
            l: 1024,
            pt: 1.0,
            sigma_r2: 1e-12,
            sigma_k2: vec![1e-12; 4],
            sigma_t2: 1.0,
            alpha_t: Cf64::new(1.0, 0.0),
            kappa: db_to_linear(3.0),
            d_br: 50.0,
            d_rt: 3.0,
            d_ru: 8.0,
            theta_br: PI / 4.0,
            theta_rb: -PI / 4.0,
            theta_2: PI / 4.0,
            pathloss_exponents: PathlossExponents {
                bs_ris: 2.2,
                ris_target: 2.2,
                ris_user: 2.3,
                bs_target: 2.4,
                bs_user: 3.5,
            },
            gamma_t: db_to_linear(7.0),
            eps_crb: 0.02,
            penalty_init: 1.0,
            shrink: 0.8,
            max_iters: 100,
            tol: 1e-4,
            seed: 1,
            user_angles: None,
        }
    }
}

impl SystemConfig {
    /// Check the structural invariants. Distances must be strictly positive
    /// here because channel construction evaluates path loss at each of them.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(IsacError::Config(msg.to_string()));
        if self.m < 1 || self.k < 1 || self.n < 1 || self.l < 1 {
            return bad("M, K, N, L must all be >= 1");
        }
        if self.sigma_k2.len() != self.k {
            return Err(IsacError::Config(format!(
                "sigma_k2 has {} entries, expected K = {}",
                self.sigma_k2.len(),
                self.k
            )));
        }
        if !(self.pt > 0.0) || !(self.sigma_r2 > 0.0) || !(self.sigma_t2 > 0.0) {
            return bad("Pt, sigma_r2, sigma_t2 must be strictly positive");
        }
        if self.sigma_k2.iter().any(|&s| !(s > 0.0)) {
            return bad("all sigma_k2 must be strictly positive");
        }
        if !(self.d_br > 0.0) || !(self.d_rt > 0.0) || !(self.d_ru > 0.0) {
            return bad("distances d_BR, d_RT, d_RU must be strictly positive");
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa must be nonnegative");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.penalty_init > 0.0) {
            return bad("penalty_init must be strictly positive");
        }
        if self.eps_crb.is_finite() && self.alpha_t.norm() == 0.0 {
            return bad("|alpha_t| must be > 0 when the CRB constraint is active");
        }
        if let Some(angles) = &self.user_angles {
            if angles.len() != self.k {
                return bad("user_angles must have exactly K entries");
            }
        }
        Ok(())
    }

    /// Angles of the users around the RIS. Defaults to even spacing over
    /// [-pi/3, pi/3] (a single user sits at 0).
    pub fn user_angles(&self) -> Vec<f64> {
        if let Some(angles) = &self.user_angles {
            return angles.clone();
        }
        let lo = -PI / 3.0;
        let hi = PI / 3.0;
        if self.k == 1 {
            return vec![0.0];
        }
        (0..self.k)
            .map(|i| lo + (hi - lo) * i as f64 / (self.k - 1) as f64)
            .collect()
    }

    /// Parse a configuration file of `key = value` lines.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_contents(&text)
    }

    /// Parse configuration text. Unknown keys are rejected so typos surface
    /// instead of silently keeping a default.
    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        let mut sigma_k2: Option<Vec<f64>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                IsacError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let ctx = |e: String| IsacError::Config(format!("line {}: {}", lineno + 1, e));
            match key {
                "M" => cfg.m = parse_usize(value).map_err(ctx)?,
                "K" => cfg.k = parse_usize(value).map_err(ctx)?,
                "N" => cfg.n = parse_usize(value).map_err(ctx)?,
                "L" => cfg.l = parse_usize(value).map_err(ctx)?,
                "Pt" => cfg.pt = parse_f64(value).map_err(ctx)?,
                "Pt_dBm" => cfg.pt = dbm_to_watts(parse_f64(value).map_err(ctx)?),
                "sigma_r2" => cfg.sigma_r2 = parse_f64(value).map_err(ctx)?,
                "sigma_r2_dBm" => cfg.sigma_r2 = dbm_to_watts(parse_f64(value).map_err(ctx)?),
                "sigma_k2" => sigma_k2 = Some(parse_f64_list(value).map_err(ctx)?),
                "sigma_k2_dBm" => {
                    sigma_k2 = Some(
                        parse_f64_list(value)
                            .map_err(ctx)?
                            .into_iter()
                            .map(dbm_to_watts)
                            .collect(),
                    )
                }
                "sigma_t2" => cfg.sigma_t2 = parse_f64(value).map_err(ctx)?,
                "alpha_t" => cfg.alpha_t = parse_complex(value).map_err(ctx)?,
                "kappa" => cfg.kappa = parse_f64(value).map_err(ctx)?,
                "kappa_dB" => cfg.kappa = db_to_linear(parse_f64(value).map_err(ctx)?),
                "d_BR" => cfg.d_br = parse_f64(value).map_err(ctx)?,
                "d_RT" => cfg.d_rt = parse_f64(value).map_err(ctx)?,
                "d_RU" => cfg.d_ru = parse_f64(value).map_err(ctx)?,
                "theta_BR" => cfg.theta_br = parse_f64(value).map_err(ctx)?,
                "theta_RB" => cfg.theta_rb = parse_f64(value).map_err(ctx)?,
                "theta_2" => cfg.theta_2 = parse_f64(value).map_err(ctx)?,
                "pathloss_exponents" => {
                    let v = parse_f64_list(value).map_err(ctx)?;
                    if v.len() != 5 {
                        return Err(IsacError::Config(format!(
                            "line {}: pathloss_exponents needs 5 values (BS-RIS, RIS-target, RIS-user, BS-target, BS-user)",
                            lineno + 1
                        )));
                    }
                    cfg.pathloss_exponents = PathlossExponents {
                        bs_ris: v[0],
                        ris_target: v[1],
                        ris_user: v[2],
                        bs_target: v[3],
                        bs_user: v[4],
                    };
                }
                "Gamma_t" => cfg.gamma_t = parse_f64(value).map_err(ctx)?,
                "Gamma_t_dB" => cfg.gamma_t = db_to_linear(parse_f64(value).map_err(ctx)?),
                "eps_crb" => cfg.eps_crb = parse_f64(value).map_err(ctx)?,
                "penalty_init" => cfg.penalty_init = parse_f64(value).map_err(ctx)?,
                "shrink" => cfg.shrink = parse_f64(value).map_err(ctx)?,
                "max_iters" => cfg.max_iters = parse_usize(value).map_err(ctx)?,
                "tol" => cfg.tol = parse_f64(value).map_err(ctx)?,
                "seed" => cfg.seed = parse_u64(value).map_err(ctx)?,
                "user_angles" => cfg.user_angles = Some(parse_f64_list(value).map_err(ctx)?),
                other => {
                    return Err(IsacError::Config(format!(
                        "line {}: unknown key `{}`",
                        lineno + 1,
                        other
                    )))
                }
            }
        }
        match sigma_k2 {
            Some(v) if v.len() == 1 => cfg.sigma_k2 = vec![v[0]; cfg.k],
            Some(v) => cfg.sigma_k2 = v,
            None => {
                // Keep per-user noise consistent with a possibly changed K.
                let s = cfg.sigma_k2.first().copied().unwrap_or(1e-12);
                cfg.sigma_k2 = vec![s; cfg.k];
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.parse()
        .map_err(|_| format!("`{s}` is not a valid integer"))
}

fn parse_u64(s: &str) -> std::result::Result<u64, String> {
    s.parse()
        .map_err(|_| format!("`{s}` is not a valid integer"))
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    match s {
        "inf" | "INF" | "Inf" => Ok(f64::INFINITY),
        _ => s
            .parse()
            .map_err(|_| format!("`{s}` is not a valid number")),
    }
}

fn parse_f64_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|p| parse_f64(p.trim())).collect()
}

/// Accepts `a`, `a+bi`, `a-bi` (also `j` as the imaginary unit).
fn parse_complex(s: &str) -> std::result::Result<Cf64, String> {
    let t = s.replace(' ', "").replace('j', "i");
    if let Ok(re) = t.parse::<f64>() {
        return Ok(Cf64::new(re, 0.0));
    }
    let inner = t
        .strip_suffix('i')
        .ok_or_else(|| format!("`{s}` is not a valid complex number"))?;
    // Split at the sign of the imaginary part (skip a leading sign).
    let split = inner[1..]
        .rfind(['+', '-'])
        .map(|p| p + 1)
        .ok_or_else(|| format!("`{s}` is not a valid complex number"))?;
    let re: f64 = inner[..split]
        .parse()
        .map_err(|_| format!("`{s}` has an invalid real part"))?;
    let im_str = &inner[split..];
    let im: f64 = if im_str == "+" {
        1.0
    } else if im_str == "-" {
        -1.0
    } else {
        im_str
            .parse()
            .map_err(|_| format!("`{s}` has an invalid imaginary part"))?
    };
    Ok(Cf64::new(re, im))
}
