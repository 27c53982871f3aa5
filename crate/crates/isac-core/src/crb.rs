//! Fisher information and the Cramér-Rao bound for the target DoA pair
//! `(theta_1, theta_2)` with the complex RCS real/imag parts as nuisance
//! parameters.
//!
//! The noise-free echo mean is `eta = alpha_t vec{H_t(phi) W S}` with
//! `S S^H = L I`, so every Fisher element reduces to a trace in `W W^H` and
//! the three matrices `H_t`, `dH_t/dtheta_1`, `dH_t/dtheta_2`. Only the
//! BS-target factor depends on `theta_1` and only the RIS-target factor on
//! `theta_2`, which keeps the derivative matrices rank-two.

use crate::channel::ChannelSet;
use crate::metrics::target_channel_vector;
use crate::{CMat, CVec, Cf64, IsacError, Result};
use nalgebra::{Matrix2, Matrix4};
use std::f64::consts::PI;

/// Derivative of the ULA steering vector with respect to the angle:
/// entry `i` is `-j pi i cos(theta) e^{-j pi i sin(theta)}`.
pub fn steering_derivative(n: usize, theta: f64) -> CVec {
    let s = theta.sin();
    let c = theta.cos();
    CVec::from_fn(n, |i, _| {
        let phase = Cf64::from_polar(1.0, -PI * i as f64 * s);
        Cf64::new(0.0, -PI * i as f64 * c) * phase
    })
}

/// Partial derivatives of `H_t(phi) = v v^T` with respect to the two DoAs.
///
/// `d v/d theta_1 = alpha_dt da_M(theta_1)` (direct path only) and
/// `d v/d theta_2 = G^T diag(alpha_rt da_N(theta_2)) phi` (RIS path only),
/// each entering through the product rule on the outer product.
pub fn ht_derivatives(ch: &ChannelSet, phi: &CVec) -> (CMat, CMat) {
    let v = target_channel_vector(ch, phi);
    let vdot1 = steering_derivative(ch.h_dt.len(), ch.theta_1).map(|z| z * ch.alpha_dt);
    let hdot = &vdot1 * v.transpose() + &v * vdot1.transpose();

    let da = steering_derivative(ch.h_rt.len(), ch.theta_2).map(|z| z * ch.alpha_rt);
    let scaled = CVec::from_fn(da.len(), |i, _| phi[i] * da[i]);
    let vdot2 = ch.g.transpose() * scaled;
    let hddot = &vdot2 * v.transpose() + &v * vdot2.transpose();
    (hdot, hddot)
}

/// The six raw Fisher traces
/// `F1..F6 = Tr{X W W^H Y^H}` for `(X, Y)` in
/// `(Hd, Hd), (Hdd, Hd), (H, Hd), (Hdd, Hdd), (H, Hdd), (H, H)`,
/// shared by the FIM assembly and the CRB-constrained optimizer.
pub fn fisher_traces(w: &CMat, phi: &CVec, ch: &ChannelSet) -> [Cf64; 6] {
    let v = target_channel_vector(ch, phi);
    let ht = &v * v.transpose();
    let (hdot, hddot) = ht_derivatives(ch, phi);
    let a = hdot * w;
    let b = hddot * w;
    let c = ht * w;
    let inner = |x: &CMat, y: &CMat| -> Cf64 {
        // Tr{X W W^H Y^H} = sum_k (Y w_k)^H (X w_k)
        let mut acc = Cf64::new(0.0, 0.0);
        for k in 0..x.ncols() {
            acc += y.column(k).dotc(&x.column(k));
        }
        acc
    };
    [
        inner(&a, &a),
        inner(&b, &a),
        inner(&c, &a),
        inner(&b, &b),
        inner(&c, &b),
        inner(&c, &c),
    ]
}

/// The 2x2 blocks of the 4x4 Fisher information matrix.
#[derive(Debug, Clone)]
pub struct FimBlocks {
    /// DoA-DoA block.
    pub f_tt: Matrix2<f64>,
    /// DoA-RCS coupling block.
    pub f_ta: Matrix2<f64>,
    /// RCS-RCS block (a nonnegative multiple of the identity).
    pub f_aa: Matrix2<f64>,
}

impl FimBlocks {
    /// Assemble the full symmetric 4x4 matrix.
    pub fn full(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.f_tt);
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&self.f_ta);
        m.fixed_view_mut::<2, 2>(2, 0)
            .copy_from(&self.f_ta.transpose());
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&self.f_aa);
        m
    }
}

/// Assemble the FIM blocks from the six Fisher slots:
/// `F_tt = s |a|^2 Re{[[t1, t2], [t2, t4]]}`, the RCS coupling rows
/// `s Re{a^* t_{3,5} [1 j]}`, and `F_aa = s Re{t6} I2`.
pub fn blocks_from_slots(slots: &[Cf64; 6], alpha_t: Cf64, fisher_scale: f64) -> FimBlocks {
    let c1 = fisher_scale * alpha_t.norm_sqr();
    let c2 = fisher_scale;
    let f_tt = Matrix2::new(
        c1 * slots[0].re,
        c1 * slots[1].re,
        c1 * slots[1].re,
        c1 * slots[3].re,
    );
    let z3 = alpha_t.conj() * slots[2];
    let z5 = alpha_t.conj() * slots[4];
    let f_ta = Matrix2::new(c2 * z3.re, -c2 * z3.im, c2 * z5.re, -c2 * z5.im);
    let f_aa = Matrix2::new(c2 * slots[5].re, 0.0, 0.0, c2 * slots[5].re);
    FimBlocks { f_tt, f_ta, f_aa }
}

/// Fisher information blocks from the element formulas
/// (`F_theta1theta1 = (2 L |alpha|^2/sigma_r^2) Tr{Hd W W^H Hd^H}` and
/// friends), built on top of [`fisher_traces`].
pub fn fim(
    w: &CMat,
    phi: &CVec,
    ch: &ChannelSet,
    l: usize,
    alpha_t: Cf64,
    sigma_r2: f64,
) -> FimBlocks {
    blocks_from_slots(
        &fisher_traces(w, phi, ch),
        alpha_t,
        2.0 * l as f64 / sigma_r2,
    )
}

fn inv2(m: &Matrix2<f64>, what: &str) -> Result<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let scale = m.norm().max(1e-300);
    // Reciprocal condition proxy for a 2x2: |det| / ||m||^2.
    if det.abs() <= 1e-12 * scale * scale {
        return Err(IsacError::Singular(format!(
            "{what} is numerically singular (det {det:.3e})"
        )));
    }
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]).map(|v| v / det))
}

/// Sum of the two DoA CRBs:
/// `Tr{(F_tt - F_ta F_aa^{-1} F_ta^T)^{-1}}` via closed-form 2x2 inverses.
pub fn crb_theta(blocks: &FimBlocks) -> Result<f64> {
    let f_aa_inv = inv2(&blocks.f_aa, "F_aa")?;
    let schur = blocks.f_tt - blocks.f_ta * f_aa_inv * blocks.f_ta.transpose();
    let schur_inv = inv2(&schur, "Schur complement of the FIM")?;
    let crb = schur_inv.trace();
    if !(crb > 0.0) {
        return Err(IsacError::Singular(format!(
            "CRB not positive ({crb:.3e}); no target energy in the design"
        )));
    }
    Ok(crb)
}

/// CRB recomputed from scratch for a design point; the independent check the
/// optimizers are validated against.
pub fn crb_of_design(
    w: &CMat,
    phi: &CVec,
    ch: &ChannelSet,
    l: usize,
    alpha_t: Cf64,
    sigma_r2: f64,
) -> Result<f64> {
    crb_theta(&fim(w, phi, ch, l, alpha_t, sigma_r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{realize, steering_vector};
    use crate::config::SystemConfig;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn setup(m: usize, k: usize, n: usize, seed: u64) -> (SystemConfig, ChannelSet) {
        let cfg = SystemConfig {
            m,
            k,
            n,
            l: 16,
            sigma_k2: vec![1e-12; k],
            seed,
            ..SystemConfig::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let ch = realize(&cfg, &mut rng).unwrap();
        (cfg, ch)
    }

    fn random_w(m: usize, cols: usize, rng: &mut ChaCha12Rng) -> CMat {
        CMat::from_fn(m, cols, |_, _| {
            Cf64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_phi(n: usize, rng: &mut ChaCha12Rng) -> CVec {
        CVec::from_fn(n, |_, _| Cf64::from_polar(1.0, rng.gen_range(-3.1..3.1)))
    }

    #[test]
    fn steering_derivative_structure() {
        let d = steering_derivative(5, 0.3);
        assert_eq!(d[0], Cf64::new(0.0, 0.0));
        let d90 = steering_derivative(4, PI / 2.0);
        for i in 0..4 {
            assert!(d90[i].norm() < 1e-12);
        }
    }

    #[test]
    fn steering_derivative_finite_difference() {
        let n = 4;
        let theta = 0.3;
        let h = 1e-6;
        let d = steering_derivative(n, theta);
        let ap = steering_vector(n, theta + h);
        let am = steering_vector(n, theta - h);
        for i in 0..n {
            let fd = (ap[i] - am[i]) / (2.0 * h);
            assert!(
                (d[i] - fd).norm() <= 1e-6 * (1.0 + fd.norm()),
                "entry {i}: {} vs {}",
                d[i],
                fd
            );
        }
    }

    #[test]
    fn ht_derivatives_match_finite_difference() {
        let (_, ch) = setup(3, 1, 4, 21);
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let phi = random_phi(4, &mut rng);
        let (hdot, hddot) = ht_derivatives(&ch, &phi);
        let h = 1e-6;

        // Rebuild H_t at shifted theta_1 (only h_dt changes).
        let ht_at_theta1 = |t1: f64| {
            let mut c = ch.clone();
            c.h_dt = steering_vector(3, t1).map(|z| z * c.alpha_dt);
            c.theta_1 = t1;
            crate::metrics::target_channel_matrix(&c, &phi)
        };
        let fd1 =
            (ht_at_theta1(ch.theta_1 + h) - ht_at_theta1(ch.theta_1 - h)).map(|z| z / (2.0 * h));
        let scale1 = fd1.norm().max(1e-300);
        assert!((&hdot - &fd1).norm() <= 1e-5 * scale1);

        let ht_at_theta2 = |t2: f64| {
            let mut c = ch.clone();
            c.h_rt = steering_vector(4, t2).map(|z| z * c.alpha_rt);
            c.theta_2 = t2;
            crate::metrics::target_channel_matrix(&c, &phi)
        };
        let fd2 =
            (ht_at_theta2(ch.theta_2 + h) - ht_at_theta2(ch.theta_2 - h)).map(|z| z / (2.0 * h));
        let scale2 = fd2.norm().max(1e-300);
        assert!((&hddot - &fd2).norm() <= 1e-5 * scale2);
    }

    #[test]
    fn ht_derivative_vanishes_without_direct_path() {
        let (_, mut ch) = setup(3, 1, 4, 23);
        ch.alpha_dt = Cf64::new(0.0, 0.0);
        ch.h_dt = CVec::zeros(3);
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        let phi = random_phi(4, &mut rng);
        let (hdot, _) = ht_derivatives(&ch, &phi);
        assert!(hdot.norm() < 1e-300);
    }

    #[test]
    fn fim_zero_beamformer_and_linearity_in_l() {
        let (cfg, ch) = setup(3, 1, 4, 25);
        let mut rng = ChaCha12Rng::seed_from_u64(26);
        let phi = random_phi(4, &mut rng);
        let w0 = CMat::zeros(3, 4);
        let b = fim(&w0, &phi, &ch, cfg.l, cfg.alpha_t, cfg.sigma_r2);
        assert!(b.full().norm() == 0.0);

        let w = random_w(3, 4, &mut rng);
        let b1 = fim(&w, &phi, &ch, 16, cfg.alpha_t, cfg.sigma_r2);
        let b2 = fim(&w, &phi, &ch, 32, cfg.alpha_t, cfg.sigma_r2);
        assert!((b2.full() - b1.full().map(|v| 2.0 * v)).norm() <= 1e-12 * b2.full().norm());
    }

    #[test]
    fn fim_psd_and_symmetric() {
        let mut rng = ChaCha12Rng::seed_from_u64(27);
        for seed in 0..5u64 {
            let (cfg, ch) = setup(3, 1, 4, 30 + seed);
            let w = random_w(3, 4, &mut rng);
            let phi = random_phi(4, &mut rng);
            let f = fim(&w, &phi, &ch, cfg.l, cfg.alpha_t, cfg.sigma_r2).full();
            assert!((f - f.transpose()).norm() <= 1e-12 * f.norm().max(1e-300));
            let eigs = f.symmetric_eigenvalues();
            let fnorm = f.norm().max(1e-300);
            for e in eigs.iter() {
                assert!(*e >= -1e-8 * fnorm, "eig {e} vs norm {fnorm}");
            }
        }
    }

    /// Finite-difference-on-eta oracle: FIM(i,j) = (2/sigma^2) Re{de^H de}
    /// with eta = alpha vec{H_t W S}, S = sqrt(L) [I 0].
    fn fim_fd_oracle(
        w: &CMat,
        phi: &CVec,
        ch: &ChannelSet,
        l: usize,
        alpha: Cf64,
        sigma_r2: f64,
    ) -> Matrix4<f64> {
        let m = ch.h_dt.len();
        let n = ch.h_rt.len();
        let eta = |t1: f64, t2: f64, a: Cf64| -> CVec {
            let mut c = ch.clone();
            c.h_dt = steering_vector(m, t1).map(|z| z * c.alpha_dt);
            c.h_rt = steering_vector(n, t2).map(|z| z * c.alpha_rt);
            let ht = crate::metrics::target_channel_matrix(&c, phi);
            let htw = ht * w; // M x (K+M)
                              // S = sqrt(L) [I 0] in C^{(K+M) x L}: vec{H W S} stacks
                              // sqrt(L) * column k for k < K+M, zeros afterwards.
            let cols = htw.ncols();
            let mut out = CVec::zeros(m * l);
            for k in 0..cols.min(l) {
                for r in 0..m {
                    out[k * m + r] = htw[(r, k)] * (l as f64).sqrt() * a;
                }
            }
            out
        };
        let h = 1e-6;
        let d_t1 = (eta(ch.theta_1 + h, ch.theta_2, alpha)
            - eta(ch.theta_1 - h, ch.theta_2, alpha))
        .map(|z| z / (2.0 * h));
        let d_t2 = (eta(ch.theta_1, ch.theta_2 + h, alpha)
            - eta(ch.theta_1, ch.theta_2 - h, alpha))
        .map(|z| z / (2.0 * h));
        // eta is linear in alpha: exact derivatives.
        let base = eta(ch.theta_1, ch.theta_2, Cf64::new(1.0, 0.0));
        let d_ar = base.clone();
        let d_ai = base.map(|z| z * Cf64::new(0.0, 1.0));
        let ds = [d_t1, d_t2, d_ar, d_ai];
        let mut f = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                f[(i, j)] = 2.0 / sigma_r2 * ds[i].dotc(&ds[j]).re;
            }
        }
        f
    }

    #[test]
    fn fim_matches_eta_finite_difference() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let (cfg, ch) = setup(2, 1, 2, 41);
        let w = random_w(2, 3, &mut rng);
        let phi = random_phi(2, &mut rng);
        let ours = fim(&w, &phi, &ch, cfg.l, cfg.alpha_t, cfg.sigma_r2).full();
        let oracle = fim_fd_oracle(&w, &phi, &ch, cfg.l, cfg.alpha_t, cfg.sigma_r2);
        let scale = oracle.norm().max(1e-300);
        assert!(
            (ours - oracle).norm() <= 1e-4 * scale,
            "rel err {}",
            (ours - oracle).norm() / scale
        );
    }

    #[test]
    fn crb_block_diagonal_cases() {
        // F_ta = 0 -> Tr{F_tt^{-1}}; diagonal F_tt -> 1/a + 1/b.
        let blocks = FimBlocks {
            f_tt: Matrix2::new(4.0, 0.0, 0.0, 8.0),
            f_ta: Matrix2::zeros(),
            f_aa: Matrix2::identity(),
        };
        let crb = crb_theta(&blocks).unwrap();
        assert!((crb - (0.25 + 0.125)).abs() < 1e-14);
    }

    #[test]
    fn crb_matches_full_inverse_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(50);
        for _ in 0..20 {
            // Random PSD 4x4 with the F_aa = c I structure.
            let a = nalgebra::Matrix4::<f64>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let mut f = a * a.transpose() + Matrix4::identity() * 0.5;
            let c_aa = f[(2, 2)].max(f[(3, 3)]) + 0.1;
            f[(2, 2)] = c_aa;
            f[(3, 3)] = c_aa;
            f[(2, 3)] = 0.0;
            f[(3, 2)] = 0.0;
            let blocks = FimBlocks {
                f_tt: f.fixed_view::<2, 2>(0, 0).into_owned(),
                f_ta: f.fixed_view::<2, 2>(0, 2).into_owned(),
                f_aa: f.fixed_view::<2, 2>(2, 2).into_owned(),
            };
            // fixed_view of f_ta above takes rows 0..2, cols 2..4; rebuild f
            // so its lower-left block is the transpose.
            let mut fsym = f;
            fsym.fixed_view_mut::<2, 2>(2, 0)
                .copy_from(&blocks.f_ta.transpose());
            let crb = crb_theta(&blocks).unwrap();
            let inv = fsym.try_inverse().unwrap();
            let oracle = inv[(0, 0)] + inv[(1, 1)];
            assert!(
                (crb - oracle).abs() <= 1e-10 * oracle.abs(),
                "{crb} vs {oracle}"
            );
        }
    }

    #[test]
    fn crb_scales_inverse_quadratically_with_w() {
        let mut rng = ChaCha12Rng::seed_from_u64(60);
        let (cfg, ch) = setup(3, 1, 4, 61);
        let w = random_w(3, 4, &mut rng);
        let phi = random_phi(4, &mut rng);
        let c1 = crb_of_design(&w, &phi, &ch, cfg.l, cfg.alpha_t, cfg.sigma_r2).unwrap();
        let w2 = w.map(|z| z * 3.0);
        let c2 = crb_of_design(&w2, &phi, &ch, cfg.l, cfg.alpha_t, cfg.sigma_r2).unwrap();
        assert!((c2 - c1 / 9.0).abs() <= 1e-9 * c1);
    }

    #[test]
    fn crb_singular_error_path() {
        let blocks = FimBlocks {
            f_tt: Matrix2::new(1.0, 0.0, 0.0, 1.0),
            f_ta: Matrix2::zeros(),
            f_aa: Matrix2::zeros(),
        };
        assert!(crb_theta(&blocks).is_err());
    }
}
