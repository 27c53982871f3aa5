//! Radar-SNR-constrained joint beamforming and reflection design.
//!
//! Outer loop (one pass per iteration): FP auxiliaries `r`, `c`; receive
//! filter `u` (Rayleigh-quotient optimum, phase-fixed so the target response
//! is real); beamformer `w` by a ball QP with the linearized radar
//! constraint; reflection `phi` by ADMM, where the radar constraint is lifted
//! to an explicit quadratic in `phi`, majorized by a second-order Taylor
//! bound, and the unit-modulus set is split into a polydisc copy plus a
//! phase-aligned auxiliary. The penalty shrinks geometrically each iteration.
//!
//! The communication-only path (`gamma_t <= 0`) runs the same machinery with
//! every radar piece disabled; baselines reuse it through
//! [`RunOptions`].

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::fp;
use crate::metrics::{
    radar_snr_lower_bound, sum_rate, target_channel_vector, DesignVariables, IterRecord, RunTrace,
};
use crate::solvers::{
    max_eigenvalue, phase_project, rcg_unit_modulus, solve_ball_qp, solve_polydisc_qp,
    BallQpProblem, PolydiscQp, RcgOptions,
};
use crate::{CMat, CVec, Cf64, IsacError, Result};

/// ADMM state of the reflection block.
#[derive(Debug, Clone)]
pub struct SnrAdmmState {
    pub phi: CVec,
    /// Unit-modulus auxiliary copy of `phi`.
    pub varphi: CVec,
    /// Scaled dual for `phi = varphi`.
    pub mu: CVec,
    /// Penalty parameter, decays by the configured shrink factor.
    pub rho: f64,
}

/// Linearized radar constraint data `Re{u~^H phi} <= eps4` at the expansion
/// point, plus the lifting intermediates the tests verify.
#[derive(Debug, Clone)]
pub struct PhiConstraintData {
    pub u_tilde: CVec,
    pub eps4: f64,
    /// Lifted linear map: `(I (x) H_t(phi)) w = const + F phi + L vec(phi phi^T)`.
    pub f_mat: CMat,
    /// `N x N` reshape of the quadratic lift against `u`.
    pub l_tilde: CMat,
    /// Curvature constant: max eigenvalue of `Lbar + Lbar^T`.
    pub lambda: f64,
    /// `Re{u^H (I (x) h_dt h_dt^T) w}`, the phi-free part.
    pub const_re: f64,
}

/// `G^T diag(h_rt)`: the RIS-path factor shared by all liftings.
pub(crate) fn ris_factor(ch: &ChannelSet) -> CMat {
    let n = ch.h_rt.len();
    let mut t = ch.g.transpose();
    for c in 0..n {
        let s = ch.h_rt[c];
        for r in 0..t.nrows() {
            t[(r, c)] *= s;
        }
    }
    t
}

/// Receive-filter update: the Rayleigh-quotient maximizer
/// `u = (I (x) H_t) w / ||(I (x) H_t) w||^2`, which also makes
/// `u^H (I (x) H_t) w = 1` (real and nonnegative by construction).
pub fn update_u(w: &CMat, phi: &CVec, ch: &ChannelSet) -> Result<CVec> {
    let z = crate::metrics::target_response(w, phi, ch);
    let zz = z.norm_squared();
    if zz <= 0.0 {
        return Err(IsacError::Solver(
            "target response is zero; cannot form the receive filter".to_string(),
        ));
    }
    Ok(z.map(|v| v / zz))
}

/// Real lift of `Re{phi^T Lt phi}` as `-phibar^T Lbar phibar`.
fn real_lift(l_tilde: &CMat) -> nalgebra::DMatrix<f64> {
    let n = l_tilde.nrows();
    let mut lbar = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let z = l_tilde[(r, c)];
            lbar[(r, c)] = -z.re;
            lbar[(r, n + c)] = z.im;
            lbar[(n + r, c)] = z.im;
            lbar[(n + r, n + c)] = z.re;
        }
    }
    lbar
}

fn phi_bar(phi: &CVec) -> nalgebra::DVector<f64> {
    let n = phi.len();
    nalgebra::DVector::from_fn(2 * n, |i, _| if i < n { phi[i].re } else { phi[i - n].im })
}

/// Build the MM-linearized radar constraint for the `phi` subproblem at the
/// expansion point `phi_hat`.
#[allow(clippy::too_many_arguments)]
pub fn build_phi_constraint(
    w: &CMat,
    u: &CVec,
    ch: &ChannelSet,
    phi_hat: &CVec,
    gamma_t: f64,
    l: usize,
    sigma_t2: f64,
    sigma_r2: f64,
) -> PhiConstraintData {
    let m = ch.h_dt.len();
    let n = ch.h_rt.len();
    let t = ris_factor(ch);
    let u_mat = fp::unvec_w(u, m);

    // F = (W^T h_dt) (x) T + (W^T T) (x) h_dt.
    let wt_hdt = w.transpose() * &ch.h_dt; // (K+M) x 1
    let wt_t = w.transpose() * &t; // (K+M) x N
    let hdt_mat = CMat::from_column_slice(m, 1, ch.h_dt.as_slice());
    let f_mat = wt_hdt.kronecker(&t) + wt_t.kronecker(&hdt_mat);

    // phi^T Lt phi carries the quadratic part of u^H L vec(phi phi^T).
    let l_tilde = t.transpose() * w * u_mat.adjoint() * &t;

    // Constant part: u^H (I (x) h_dt h_dt^T) w = Tr{U^H h_dt h_dt^T W}.
    let hout = &ch.h_dt * ch.h_dt.transpose();
    let z0 = &hout * w;
    let const_re = {
        let mut acc = Cf64::new(0.0, 0.0);
        for k in 0..w.ncols() {
            acc += u_mat.column(k).dotc(&z0.column(k));
        }
        acc.re
    };

    let lbar = real_lift(&l_tilde);
    let sym = &lbar + lbar.transpose();
    let sym_c = sym.map(|v| Cf64::new(v, 0.0));
    let lambda = max_eigenvalue(&sym_c);

    let pb = phi_bar(phi_hat);
    // row = phibar^T (Lbar + Lbar^T - lambda I), folded back to complex.
    let mut shifted = sym.clone();
    for i in 0..2 * n {
        shifted[(i, i)] -= lambda;
    }
    let row = shifted.transpose() * &pb; // = (pb^T shifted)^T
    let uf = u.adjoint() * &f_mat; // 1 x N
    let u_tilde = CVec::from_fn(n, |j, _| {
        (-uf[(0, j)] + Cf64::new(row[j], -row[n + j])).conj()
    });

    let eps3 = (gamma_t * sigma_r2 * u.norm_squared() / (l as f64 * sigma_t2)).sqrt();
    let quad_at_hat = (pb.transpose() * lbar.transpose() * &pb)[(0, 0)];
    let eps4 = -eps3 + quad_at_hat + const_re - lambda * n as f64;

    PhiConstraintData {
        u_tilde,
        eps4,
        f_mat,
        l_tilde,
        lambda,
        const_re,
    }
}

/// One ADMM pass on the reflection block: convex `phi` subproblem over the
/// polydisc (with the linearized radar halfspace when active), phase-aligned
/// auxiliary, dual ascent. Returns false when the linearized constraint was
/// infeasible and the least-violation fallback ran instead.
pub fn admm_phi_step(
    state: &mut SnrAdmmState,
    g: &CVec,
    d: &CMat,
    constraint: Option<&PhiConstraintData>,
) -> bool {
    let n = state.phi.len();
    let inv2rho = 1.0 / (2.0 * state.rho);
    let mut dprime = d.clone();
    for i in 0..n {
        dprime[(i, i)] += Cf64::new(inv2rho, 0.0);
    }
    let gprime = g + state.varphi.map(|z| z / state.rho) - &state.mu;
    let problem = PolydiscQp {
        d: dprime,
        g: gprime,
        halfspace: constraint.map(|c| (c.u_tilde.clone(), c.eps4)),
    };
    let feasible = match solve_polydisc_qp(&problem, &state.phi) {
        Ok(phi) => {
            state.phi = phi;
            true
        }
        Err(_) => {
            // Least-violation fallback: minimize Re{u~^H phi} entrywise,
            // keeping entries untouched where the constraint is indifferent.
            let ut = &constraint
                .expect("infeasibility only arises with a constraint")
                .u_tilde;
            state.phi = CVec::from_fn(n, |i, _| {
                let r = ut[i].norm();
                if r == 0.0 {
                    state.phi[i]
                } else {
                    -ut[i] / r
                }
            });
            false
        }
    };
    state.varphi = phase_project(&(&state.phi + state.mu.map(|z| z * state.rho)));
    let diff = &state.phi - &state.varphi;
    state.mu += diff.map(|z| z / state.rho);
    feasible
}

/// Reflection initialization: RCG maximization of the summed channel gains
/// of the users and the target.
pub fn init_phi_rcg(ch: &ChannelSet) -> CVec {
    let n = ch.h_rt.len();
    let t = ris_factor(ch);
    let mut r = t.adjoint() * &t;
    let mut s = t.adjoint() * &ch.h_dt;
    for k in 0..ch.h_dk.len() {
        let mut ak = ch.g.transpose();
        for c in 0..n {
            let sc = ch.h_rk[k][c];
            for row in 0..ak.nrows() {
                ak[(row, c)] *= sc;
            }
        }
        r += ak.adjoint() * &ak;
        s += ak.adjoint() * &ch.h_dk[k];
    }
    // Normalize so the RCG gradient tolerance is meaningful at channel scale.
    let scale = (r.trace().re / n as f64 + s.norm()).max(1e-300);
    let rs = r.map(|z| z / scale);
    let ss = s.map(|z| z / scale);
    let objective = move |phi: &CVec| {
        let rp = &rs * phi;
        let val = -(phi.dotc(&rp).re + 2.0 * ss.dotc(phi).re);
        let grad = (rp + &ss).map(|z| z * -2.0);
        (val, grad)
    };
    let phi0 = CVec::from_element(n, Cf64::new(1.0, 0.0));
    rcg_unit_modulus(objective, &phi0, &RcgOptions::default())
}

/// Beamformer initialization: all power along the dominant eigenvector of
/// the stacked user/target channel Gram, replicated over the columns.
pub fn init_w_power(ch: &ChannelSet, phi: &CVec, cols: usize, budget: f64) -> CMat {
    let m = ch.h_dt.len();
    let v = target_channel_vector(ch, phi);
    let mut gram = v.map(|z| z.conj()) * v.transpose();
    for k in 0..ch.h_dk.len() {
        let h = crate::metrics::composite_user_channel(ch, phi, k).expect("k < K");
        gram += h.map(|z| z.conj()) * h.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut best = 0;
    for i in 0..m {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let dir = eig.eigenvectors.column(best).into_owned();
    let col = dir.map(|z| z * Cf64::new((budget / cols as f64).sqrt(), 0.0));
    let mut w = CMat::zeros(m, cols);
    for j in 0..cols {
        w.column_mut(j).copy_from(&col);
    }
    w
}

/// Baseline hooks into the shared runner.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep `phi` fixed at its initialization (BF-only baseline).
    pub freeze_phi: bool,
    /// Run the communication-only path regardless of `gamma_t`.
    pub disable_radar: bool,
    /// Start from this reflection vector instead of the RCG initializer.
    pub phi_init: Option<CVec>,
    /// Beamformer column count; defaults to K+M.
    pub w_cols: Option<usize>,
    /// Power budget; defaults to `cfg.pt`.
    pub budget: Option<f64>,
    /// Per-user effective noise; defaults to `cfg.sigma_k2`.
    pub noise: Option<Vec<f64>>,
}

/// Maximum achievable SNR bound at a given reflection: full power on a
/// matched single beam, matched filter at the receiver.
pub fn snr_reach(
    ch: &ChannelSet,
    phi: &CVec,
    budget: f64,
    l: usize,
    sigma_t2: f64,
    sigma_r2: f64,
) -> f64 {
    let v = target_channel_vector(ch, phi);
    let vn2 = v.norm_squared();
    l as f64 * sigma_t2 * budget * vn2 * vn2 / sigma_r2
}

/// Joint beamforming and reflection design under the radar-SNR constraint.
pub fn run_algorithm1(cfg: &SystemConfig, ch: &ChannelSet) -> Result<(DesignVariables, RunTrace)> {
    run_with_options(cfg, ch, &RunOptions::default())
}

/// Shared runner for the proposed scheme and its ablations.
pub fn run_with_options(
    cfg: &SystemConfig,
    ch: &ChannelSet,
    opts: &RunOptions,
) -> Result<(DesignVariables, RunTrace)> {
    cfg.validate()?;
    let radar_on = cfg.gamma_t > 0.0 && !opts.disable_radar;
    let cols = opts.w_cols.unwrap_or(cfg.k + cfg.m);
    let budget = opts.budget.unwrap_or(cfg.pt);
    let noise = opts.noise.clone().unwrap_or_else(|| cfg.sigma_k2.clone());
    let m = cfg.m;

    let phi0 = match &opts.phi_init {
        Some(p) => p.clone(),
        None => init_phi_rcg(ch),
    };
    let mut w = init_w_power(ch, &phi0, cols, budget);

    if radar_on {
        let reach = snr_reach(ch, &phi0, budget, cfg.l, cfg.sigma_t2, cfg.sigma_r2);
        if reach < cfg.gamma_t {
            return Err(IsacError::Infeasible {
                required: cfg.gamma_t,
                achievable: reach,
            });
        }
    }

    let mut state = SnrAdmmState {
        phi: phi0.clone(),
        varphi: phi0.clone(),
        mu: CVec::zeros(cfg.n),
        rho: cfg.penalty_init,
    };
    let mut u = update_u(&w, &state.phi, ch).unwrap_or_else(|_| CVec::zeros(m * cols));

    let mut trace = RunTrace::default();
    let mut recent: Vec<f64> = Vec::new();
    for iter in 0..cfg.max_iters {
        let r = fp::update_r(&w, &state.phi, ch, &noise)?;
        let c = fp::update_c(&w, &state.phi, ch, &noise, &r)?;

        let mut lin = None;
        if radar_on {
            u = update_u(&w, &state.phi, ch)?;
            let eps3 = (cfg.gamma_t * cfg.sigma_r2 * u.norm_squared()
                / (cfg.l as f64 * cfg.sigma_t2))
                .sqrt();
            let ht = crate::metrics::target_channel_matrix(ch, &state.phi);
            let u_mat = fp::unvec_w(&u, m);
            let cmat = ht.adjoint() * u_mat;
            lin = Some((CVec::from_column_slice(cmat.as_slice()), eps3));
        }

        let (a, b_gram, _e1) = fp::assemble_w_form(&state.phi, ch, &r, &c, &noise, cols)?;
        let wv = solve_ball_qp(&BallQpProblem {
            q: b_gram,
            a,
            lin,
            radius2: budget,
        })?;
        w = fp::unvec_w(&wv, m);

        if !opts.freeze_phi {
            let (g, d, _e2) = fp::assemble_phi_form(&w, ch, &r, &c, &noise)?;
            let constraint = if radar_on {
                Some(build_phi_constraint(
                    &w,
                    &u,
                    ch,
                    &state.phi,
                    cfg.gamma_t,
                    cfg.l,
                    cfg.sigma_t2,
                    cfg.sigma_r2,
                ))
            } else {
                None
            };
            admm_phi_step(&mut state, &g, &d, constraint.as_ref());
        }

        let rate = sum_rate(&w, &state.phi, ch, &noise)?;
        let snr = if u.norm_squared() > 0.0 {
            radar_snr_lower_bound(&w, &u, &state.phi, ch, cfg.l, cfg.sigma_t2, cfg.sigma_r2)
                .unwrap_or(0.0)
        } else {
            0.0
        };
        let residual = (&state.phi - &state.varphi)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        trace.records.push(IterRecord {
            iter,
            sum_rate: rate,
            constraint_value: snr,
            residual,
            penalty: state.rho,
        });

        recent.push(rate);
        if recent.len() > 4 {
            recent.remove(0);
        }
        let settled = recent.len() == 4
            && recent
                .windows(2)
                .all(|p| (p[1] - p[0]).abs() <= cfg.tol * (1.0 + p[0].abs()));
        let constraint_ok = !radar_on || snr >= cfg.gamma_t * (1.0 - 1e-3);
        if settled && residual < 1e-3 && constraint_ok {
            trace.converged = true;
            break;
        }
        state.rho = (state.rho * cfg.shrink).max(1e-6);
    }
    trace.flagged = !trace.converged;

    // Finisher: project the reflection onto the torus exactly, refresh the
    // receive filter, and re-solve the beamformer against the exact (now
    // linear-in-w) radar constraint at the final phi. Should the ADMM have
    // drifted to a reflection that no longer reaches the threshold, fall
    // back to the feasible initializer.
    state.phi = phase_project(&state.phi);
    if radar_on
        && snr_reach(ch, &state.phi, budget, cfg.l, cfg.sigma_t2, cfg.sigma_r2)
            < cfg.gamma_t * (1.0 + 1e-9)
    {
        state.phi = phi0.clone();
        trace.flagged = true;
    }
    if let Ok(unew) = update_u(&w, &state.phi, ch) {
        u = unew;
    }
    for _ in 0..2 {
        let r = fp::update_r(&w, &state.phi, ch, &noise)?;
        let c = fp::update_c(&w, &state.phi, ch, &noise, &r)?;
        let mut lin = None;
        if radar_on {
            u = update_u(&w, &state.phi, ch)?;
            let eps3 = (cfg.gamma_t * cfg.sigma_r2 * u.norm_squared()
                / (cfg.l as f64 * cfg.sigma_t2))
                .sqrt();
            let ht = crate::metrics::target_channel_matrix(ch, &state.phi);
            let u_mat = fp::unvec_w(&u, m);
            let cmat = ht.adjoint() * u_mat;
            lin = Some((CVec::from_column_slice(cmat.as_slice()), eps3));
        }
        let (a, b_gram, _e1) = fp::assemble_w_form(&state.phi, ch, &r, &c, &noise, cols)?;
        match solve_ball_qp(&BallQpProblem {
            q: b_gram,
            a,
            lin,
            radius2: budget,
        }) {
            Ok(wv) => w = fp::unvec_w(&wv, m),
            Err(_) => {
                // Stale receive filter with no target energy: take the
                // matched full-power beam, which meets the threshold by the
                // feasibility precondition.
                let v = target_channel_vector(ch, &state.phi);
                let mut wm = CMat::zeros(m, cols);
                if v.norm() > 0.0 {
                    let col = v.map(|z| z.conj() * (budget.sqrt() / v.norm()));
                    wm.column_mut(0).copy_from(&col);
                }
                w = wm;
                trace.flagged = true;
                break;
            }
        }
    }
    if let Ok(unew) = update_u(&w, &state.phi, ch) {
        u = unew;
    }
    if let Some(last) = trace.records.last_mut() {
        last.sum_rate = sum_rate(&w, &state.phi, ch, &noise)?;
        last.constraint_value = if u.norm_squared() > 0.0 {
            radar_snr_lower_bound(&w, &u, &state.phi, ch, cfg.l, cfg.sigma_t2, cfg.sigma_r2)
                .unwrap_or(0.0)
        } else {
            0.0
        };
        last.residual = 0.0;
    }

    Ok((
        DesignVariables {
            w,
            phi: state.phi,
            u,
        },
        trace,
    ))
}
