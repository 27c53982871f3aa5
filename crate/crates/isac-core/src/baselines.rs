//! Comparison schemes: communication-only, beamforming-only (fixed
//! reflection), and fully separate sensing/communication design.

use crate::alg_snr::{init_phi_rcg, update_u};
use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::crb::crb_of_design;
use crate::metrics::{target_channel_vector, DesignVariables, RunTrace};
use crate::{alg_crb, alg_snr, CMat, CVec, IsacError, Result};

/// Which sensing constraint a run enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Worst-case radar SNR threshold (target detection).
    Snr,
    /// CRB threshold on DoA estimation.
    Crb,
}

/// The four schemes compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Joint beamforming and reflection design under the sensing constraint.
    Proposed,
    /// Sensing constraint disabled.
    CommOnly,
    /// Reflection frozen at the channel-gain initializer.
    BfOnly,
    /// Reflection, radar beam, and communication beams designed separately.
    Separate,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::CommOnly => "comm_only",
            Scheme::BfOnly => "bf_only",
            Scheme::Separate => "separate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Scheme::Proposed),
            "comm_only" => Ok(Scheme::CommOnly),
            "bf_only" => Ok(Scheme::BfOnly),
            "separate" => Ok(Scheme::Separate),
            other => Err(IsacError::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Communication-only design: the joint machinery with the sensing
/// constraint disabled (identical to the SNR algorithm at `Gamma_t = 0`).
pub fn baseline_comm_only(
    cfg: &SystemConfig,
    ch: &ChannelSet,
) -> Result<(DesignVariables, RunTrace)> {
    alg_snr::run_with_options(
        cfg,
        ch,
        &alg_snr::RunOptions {
            disable_radar: true,
            ..Default::default()
        },
    )
}

/// Beamforming-only design: reflection fixed at the sum-channel-gain
/// initializer, beamformer (and receive filter) iterated to convergence
/// under the active sensing constraint.
pub fn baseline_bf_only(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    mode: Mode,
) -> Result<(DesignVariables, RunTrace)> {
    match mode {
        Mode::Snr => alg_snr::run_with_options(
            cfg,
            ch,
            &alg_snr::RunOptions {
                freeze_phi: true,
                ..Default::default()
            },
        ),
        Mode::Crb => alg_crb::run_with_options(
            cfg,
            ch,
            &alg_crb::CrbRunOptions {
                freeze_phi: true,
                phi_init: None,
            },
        ),
    }
}

/// Fully separate design: reflection by channel-gain maximization, then a
/// minimum-power matched radar beam meeting the sensing constraint alone,
/// then communication beams over the leftover power with the radar beam
/// treated as fixed interference.
pub fn baseline_separate(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    mode: Mode,
) -> Result<(DesignVariables, RunTrace)> {
    cfg.validate()?;
    let phi = init_phi_rcg(ch);
    let v = target_channel_vector(ch, &phi);
    let cols = cfg.k + cfg.m;

    // Minimum radar power for the matched beam w_r = sqrt(p) v* / ||v||.
    let p_min = match mode {
        Mode::Snr => {
            if cfg.gamma_t <= 0.0 {
                0.0
            } else {
                let vn2 = v.norm_squared();
                if vn2 <= 0.0 {
                    return Err(IsacError::Infeasible {
                        required: cfg.gamma_t,
                        achievable: 0.0,
                    });
                }
                cfg.gamma_t * cfg.sigma_r2 / (cfg.l as f64 * cfg.sigma_t2 * vn2 * vn2)
            }
        }
        Mode::Crb => {
            if !cfg.eps_crb.is_finite() {
                0.0
            } else {
                // CRB of the matched beam scales as 1/p.
                let unit = alg_crb::probe_design(ch, &phi, 1.0, cols);
                let crb_unit = crb_of_design(&unit, &phi, ch, cfg.l, cfg.alpha_t, cfg.sigma_r2)
                    .map_err(|e| IsacError::Solver(format!("separate-scheme probe: {e}")))?;
                crb_unit / cfg.eps_crb
            }
        }
    };
    if p_min > cfg.pt {
        return Err(IsacError::Infeasible {
            required: p_min,
            achievable: cfg.pt,
        });
    }

    let mut w_r = CVec::zeros(cfg.m);
    if p_min > 0.0 {
        w_r = v.map(|z| z.conj() * (p_min.sqrt() / v.norm()));
    }

    // Residual interference of the radar beam at each user.
    let mut noise = cfg.sigma_k2.clone();
    for (k, nz) in noise.iter_mut().enumerate() {
        let hk = crate::metrics::composite_user_channel(ch, &phi, k)?;
        *nz += hk.dot(&w_r).norm_sqr();
    }

    let comm_budget = cfg.pt - p_min;
    let (dv_c, trace) = alg_snr::run_with_options(
        cfg,
        ch,
        &alg_snr::RunOptions {
            disable_radar: true,
            freeze_phi: true,
            phi_init: Some(phi.clone()),
            w_cols: Some(cfg.k),
            budget: Some(comm_budget.max(0.0)),
            noise: Some(noise),
        },
    )?;

    // Assemble the full beamformer: K communication columns, one radar
    // column, zero padding.
    let mut w = CMat::zeros(cfg.m, cols);
    for j in 0..cfg.k {
        w.column_mut(j).copy_from(&dv_c.w.column(j));
    }
    w.column_mut(cfg.k).copy_from(&w_r);
    let u = update_u(&w, &phi, ch).unwrap_or_else(|_| CVec::zeros(cfg.m * cols));

    Ok((DesignVariables { w, phi, u }, trace))
}

/// Run one scheme in one mode; the proposed scheme dispatches to the
/// matching algorithm.
pub fn run_scheme(
    scheme: Scheme,
    mode: Mode,
    cfg: &SystemConfig,
    ch: &ChannelSet,
) -> Result<(DesignVariables, RunTrace)> {
    match (scheme, mode) {
        (Scheme::Proposed, Mode::Snr) => alg_snr::run_algorithm1(cfg, ch),
        (Scheme::Proposed, Mode::Crb) => alg_crb::run_algorithm2(cfg, ch),
        (Scheme::CommOnly, _) => baseline_comm_only(cfg, ch),
        (Scheme::BfOnly, m) => baseline_bf_only(cfg, ch, m),
        (Scheme::Separate, m) => baseline_separate(cfg, ch, m),
    }
}

/// Independent recomputation of the sensing constraint value of a returned
/// design (SNR bound or CRB, per mode).
pub fn constraint_of_design(
    mode: Mode,
    cfg: &SystemConfig,
    ch: &ChannelSet,
    dv: &DesignVariables,
) -> f64 {
    match mode {
        Mode::Snr => crate::metrics::radar_snr_lower_bound(
            &dv.w,
            &dv.u,
            &dv.phi,
            ch,
            cfg.l,
            cfg.sigma_t2,
            cfg.sigma_r2,
        )
        .unwrap_or(0.0),
        Mode::Crb => crb_of_design(&dv.w, &dv.phi, ch, cfg.l, cfg.alpha_t, cfg.sigma_r2)
            .unwrap_or(f64::INFINITY),
    }
}

/// The initializer reflection (the `Separate` and `BF only` schemes keep it
/// fixed).
pub fn init_reflection(ch: &ChannelSet) -> CVec {
    init_phi_rcg(ch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::realize;
    use crate::config::db_to_linear;
    use crate::metrics::sum_rate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn setup(m: usize, k: usize, n: usize, seed: u64) -> (SystemConfig, ChannelSet) {
        let cfg = SystemConfig {
            m,
            k,
            n,
            sigma_k2: vec![1e-12; k],
            seed,
            max_iters: 40,
            ..SystemConfig::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let ch = realize(&cfg, &mut rng).unwrap();
        (cfg, ch)
    }

    #[test]
    fn comm_only_equals_gamma_zero_run() {
        let (mut cfg, ch) = setup(3, 2, 4, 310);
        cfg.gamma_t = 0.0;
        let (a, _) = baseline_comm_only(&cfg, &ch).unwrap();
        let (b, _) = alg_snr::run_algorithm1(&cfg, &ch).unwrap();
        assert!((a.w - b.w).norm() < 1e-12);
        assert!((a.phi - b.phi).norm() < 1e-12);
    }

    #[test]
    fn bf_only_keeps_initial_reflection() {
        let (mut cfg, ch) = setup(3, 2, 4, 311);
        cfg.gamma_t = db_to_linear(3.0);
        let phi0 = init_reflection(&ch);
        let (dv, _) = baseline_bf_only(&cfg, &ch, Mode::Snr).unwrap();
        assert!((dv.phi - phi0).norm() < 1e-9);
    }

    #[test]
    fn separate_meets_snr_constraint_and_respects_power() {
        let (mut cfg, ch) = setup(4, 2, 6, 312);
        cfg.gamma_t = db_to_linear(5.0);
        let (dv, _) = baseline_separate(&cfg, &ch, Mode::Snr).unwrap();
        assert!(dv.w.norm_squared() <= cfg.pt * (1.0 + 1e-6));
        let snr = constraint_of_design(Mode::Snr, &cfg, &ch, &dv);
        assert!(snr >= cfg.gamma_t * (1.0 - 1e-6), "snr {snr}");
    }

    #[test]
    fn separate_with_vacuous_constraint_is_comm_only_fixed_phi() {
        let (mut cfg, ch) = setup(3, 2, 4, 313);
        cfg.gamma_t = 0.0;
        let (dv, _) = baseline_separate(&cfg, &ch, Mode::Snr).unwrap();
        // Radar column is zero.
        let radar_col = dv.w.column(cfg.k);
        assert!(radar_col.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn separate_infeasible_when_radar_power_exceeds_budget() {
        let (mut cfg, ch) = setup(3, 2, 4, 314);
        cfg.gamma_t = 1e30;
        assert!(matches!(
            baseline_separate(&cfg, &ch, Mode::Snr),
            Err(IsacError::Infeasible { .. })
        ));
    }

    #[test]
    fn separate_trace_rate_matches_full_design() {
        // The comm subproblem's modified-noise rate equals the true rate of
        // the assembled full beamformer.
        let (mut cfg, ch) = setup(4, 2, 6, 315);
        cfg.gamma_t = db_to_linear(5.0);
        let (dv, trace) = baseline_separate(&cfg, &ch, Mode::Snr).unwrap();
        let rate = sum_rate(&dv.w, &dv.phi, &ch, &cfg.sigma_k2).unwrap();
        let traced = trace.final_sum_rate();
        assert!(
            (rate - traced).abs() <= 1e-9 * (1.0 + rate),
            "{rate} vs {traced}"
        );
    }
}
