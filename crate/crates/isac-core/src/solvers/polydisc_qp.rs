//! Convex QP over the unit polydisc `|x_n| <= 1` with one optional halfspace
//! `Re{u~^H x} <= eps`:
//!
//! ```text
//! minimize    x^H D x - Re{g^H x}
//! subject to  Re{u~^H x} <= eps     (optional)
//!             |x_n| <= 1            for all n
//! ```
//!
//! The polydisc projection is an entrywise magnitude clip, so the inner
//! problem is solved by accelerated projected gradient; the halfspace is
//! handled by bisection on its multiplier.

use super::max_eigenvalue;
use crate::{CMat, CVec, Cf64, IsacError, Result};

/// Problem data for [`solve_polydisc_qp`].
#[derive(Debug, Clone)]
pub struct PolydiscQp {
    /// Hermitian PSD quadratic form (add a ridge before calling if strict
    /// convexity is wanted).
    pub d: CMat,
    /// Linear objective term; the objective is `x^H D x - Re{g^H x}`.
    pub g: CVec,
    /// Optional halfspace `Re{u~^H x} <= eps`.
    pub halfspace: Option<(CVec, f64)>,
}

fn clip_polydisc(x: &mut CVec) {
    for v in x.iter_mut() {
        let r = v.norm();
        if r > 1.0 {
            *v /= r;
        }
    }
}

/// Accelerated projected gradient for the polydisc-constrained quadratic.
fn apg(d: &CMat, g: &CVec, x0: &CVec, lmax: f64, max_iters: usize) -> CVec {
    let step = 1.0 / (2.0 * lmax).max(1e-300);
    let obj = |x: &CVec| x.dotc(&(d * x)).re - g.dotc(x).re;
    let mut x = x0.clone();
    clip_polydisc(&mut x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = obj(&x);
    for _ in 0..max_iters {
        let grad = (d * &y).map(|z| z * 2.0) - g;
        let mut x_new = &y - grad.map(|z| z * step);
        clip_polydisc(&mut x_new);
        let f_new = obj(&x_new);
        if f_new > fx {
            // Momentum restart from the best point.
            y = x.clone();
            t = 1.0;
            let grad = (d * &y).map(|z| z * 2.0) - g;
            let mut x_r = &y - grad.map(|z| z * step);
            clip_polydisc(&mut x_r);
            let f_r = obj(&x_r);
            let move_norm = (&x_r - &x).norm();
            if f_r <= fx {
                x = x_r;
                fx = f_r;
            }
            y = x.clone();
            if move_norm <= 1e-10 * (1.0 + x.norm()) {
                break;
            }
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = &x_new + (&x_new - &x).map(|z| z * beta);
        let move_norm = (&x_new - &x).norm();
        x = x_new;
        fx = f_new;
        t = t_new;
        if move_norm <= 1e-10 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

/// Solve the QP. Errors with [`IsacError::Infeasible`] when the halfspace
/// cannot be met anywhere on the polydisc (the reachable minimum of
/// `Re{u~^H x}` is `-sum_n |u~_n|`).
pub fn solve_polydisc_qp(p: &PolydiscQp, x0: &CVec) -> Result<CVec> {
    let lmax = max_eigenvalue(&p.d).max(0.0) + 1e-300;
    let iters = 400;
    let (ut, eps) = match &p.halfspace {
        None => return Ok(apg(&p.d, &p.g, x0, lmax, iters)),
        Some((ut, eps)) => (ut, *eps),
    };
    let reach: f64 = -ut.iter().map(|z| z.norm()).sum::<f64>();
    let feas_tol = 1e-9 * (1.0 + eps.abs() - reach);
    if eps < reach - feas_tol {
        return Err(IsacError::Infeasible {
            required: eps,
            achievable: reach,
        });
    }
    let lin = |x: &CVec| ut.dotc(x).re;

    let x_free = apg(&p.d, &p.g, x0, lmax, iters);
    if lin(&x_free) <= eps + feas_tol {
        return Ok(x_free);
    }

    // Bisection on the halfspace multiplier t >= 0; Re{u~^H x(t)} decreases.
    let g_for = |t: f64| &p.g - ut.map(|z| z * t);
    let scale_t = (p.g.norm() + 1.0) / ut.norm().max(1e-300);
    let mut hi = scale_t;
    let mut x_hi = apg(&p.d, &g_for(hi), &x_free, lmax, iters);
    let mut grew = 0;
    while lin(&x_hi) > eps && grew < 60 {
        hi *= 2.0;
        x_hi = apg(&p.d, &g_for(hi), &x_hi, lmax, iters);
        grew += 1;
    }
    if lin(&x_hi) > eps + feas_tol {
        // Attainable only in the limit: return the least-violation point.
        return Ok(ut.map(|z| {
            let r = z.norm();
            if r == 0.0 {
                Cf64::new(0.0, 0.0)
            } else {
                -z / r
            }
        }));
    }
    let mut lo = 0.0;
    for _ in 0..28 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let x_mid = apg(&p.d, &g_for(mid), &x_hi, lmax, iters);
        if lin(&x_mid) <= eps {
            hi = mid;
            x_hi = x_mid;
        } else {
            lo = mid;
        }
    }
    Ok(x_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_cvec(n: usize, rng: &mut ChaCha12Rng) -> CVec {
        CVec::from_fn(n, |_, _| {
            Cf64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn interior_closed_form() {
        // D = I, no constraint, minimizer g/2 inside the polydisc.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let g = random_cvec(6, &mut rng).map(|z| z * 0.8);
        let p = PolydiscQp {
            d: CMat::identity(6, 6),
            g: g.clone(),
            halfspace: None,
        };
        let x = solve_polydisc_qp(&p, &CVec::zeros(6)).unwrap();
        assert!((x - g.map(|z| z * 0.5)).norm() < 1e-8);
    }

    #[test]
    fn clip_when_minimizer_outside() {
        // Diagonal D: per-entry solution is the clipped unconstrained one.
        let n = 5;
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let g = random_cvec(n, &mut rng).map(|z| z * 6.0);
        let p = PolydiscQp {
            d: CMat::identity(n, n),
            g: g.clone(),
            halfspace: None,
        };
        let x = solve_polydisc_qp(&p, &CVec::zeros(n)).unwrap();
        for i in 0..n {
            let unc = g[i] * 0.5;
            let expect = if unc.norm() > 1.0 {
                unc / unc.norm()
            } else {
                unc
            };
            assert!((x[i] - expect).norm() < 1e-7);
        }
    }

    #[test]
    fn halfspace_binds() {
        let n = 4;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let g = random_cvec(n, &mut rng);
        let ut = random_cvec(n, &mut rng);
        let d = CMat::identity(n, n).map(|z: Cf64| z * 0.5);
        // Force the constraint to cut off the free optimum.
        let p_free = PolydiscQp {
            d: d.clone(),
            g: g.clone(),
            halfspace: None,
        };
        let x_free = solve_polydisc_qp(&p_free, &CVec::zeros(n)).unwrap();
        let eps = ut.dotc(&x_free).re - 0.3;
        let p = PolydiscQp {
            d,
            g,
            halfspace: Some((ut.clone(), eps)),
        };
        let x = solve_polydisc_qp(&p, &CVec::zeros(n)).unwrap();
        assert!(ut.dotc(&x).re <= eps + 1e-6);
        for i in 0..n {
            assert!(x[i].norm() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn infeasible_halfspace_detected() {
        let n = 3;
        let ut = CVec::from_element(n, Cf64::new(1.0, 0.0));
        let p = PolydiscQp {
            d: CMat::identity(n, n),
            g: CVec::zeros(n),
            halfspace: Some((ut, -(n as f64) - 1.0)),
        };
        assert!(matches!(
            solve_polydisc_qp(&p, &CVec::zeros(n)),
            Err(IsacError::Infeasible { .. })
        ));
    }
}
