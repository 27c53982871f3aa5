//! Riemannian conjugate gradient on the product of unit circles
//! (`|phi_n| = 1` for all n).
//!
//! The callback returns `(f(phi), euclidean_grad)` where the gradient is the
//! real-parametrization gradient packaged as a complex vector, so the
//! directional derivative along a complex step `d` is `Re{g^H d}`. Descent
//! directions are Polak-Ribiere with restart on non-descent; steps use Armijo
//! backtracking and the entrywise-normalization retraction.

use crate::{CVec, Cf64};

/// Stopping controls for [`rcg_unit_modulus`].
#[derive(Debug, Clone)]
pub struct RcgOptions {
    pub max_iters: usize,
    /// Riemannian gradient norm below which the iteration stops.
    pub grad_tol: f64,
}

impl Default for RcgOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
        }
    }
}

fn tangent_project(phi: &CVec, g: &CVec) -> CVec {
    CVec::from_fn(phi.len(), |i, _| {
        let inner = (phi[i].conj() * g[i]).re;
        g[i] - phi[i] * inner
    })
}

fn retract(phi: &CVec, d: &CVec, alpha: f64) -> CVec {
    CVec::from_fn(phi.len(), |i, _| {
        let z = phi[i] + d[i] * alpha;
        let r = z.norm();
        if r == 0.0 {
            phi[i]
        } else {
            z / r
        }
    })
}

fn inner(a: &CVec, b: &CVec) -> f64 {
    a.dotc(b).re
}

/// Minimize `f` over the unit-modulus torus starting from `phi0` (entries
/// are renormalized first). Returns the best iterate seen.
pub fn rcg_unit_modulus<F>(f_and_grad: F, phi0: &CVec, opts: &RcgOptions) -> CVec
where
    F: Fn(&CVec) -> (f64, CVec),
{
    let armijo_c = 1e-4;
    let mut phi = phi0.map(|z| {
        let r = z.norm();
        if r == 0.0 {
            Cf64::new(1.0, 0.0)
        } else {
            z / r
        }
    });
    let (mut fval, egrad0) = f_and_grad(&phi);
    let mut rgrad = tangent_project(&phi, &egrad0);
    let mut dir = rgrad.map(|z| -z);
    let mut best_phi = phi.clone();
    let mut best_f = fval;
    let mut alpha0 = 1.0 / (1.0 + rgrad.norm());

    for _ in 0..opts.max_iters {
        let gnorm = rgrad.norm();
        if gnorm <= opts.grad_tol {
            break;
        }
        let mut slope = inner(&rgrad, &dir);
        if slope >= -1e-14 * gnorm * dir.norm().max(1e-300) {
            dir = rgrad.map(|z| -z);
            slope = -gnorm * gnorm;
        }
        // Armijo backtracking with halving.
        let mut alpha = alpha0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = retract(&phi, &dir, alpha);
            let (fc, gc) = f_and_grad(&cand);
            if fc <= fval + armijo_c * alpha * slope {
                let rg = tangent_project(&cand, &gc);
                accepted = Some((cand, fc, rg));
                break;
            }
            alpha *= 0.5;
        }
        let (phi_new, f_new, rg_new) = match accepted {
            Some(t) => t,
            None => break,
        };
        // Polak-Ribiere+ with transported previous gradient/direction.
        let rg_old_t = tangent_project(&phi_new, &rgrad);
        let denom = inner(&rgrad, &rgrad).max(1e-300);
        let beta = (inner(&rg_new, &(&rg_new - &rg_old_t)) / denom).max(0.0);
        let dir_t = tangent_project(&phi_new, &dir);
        dir = rg_new.map(|z| -z) + dir_t.map(|z| z * beta);
        phi = phi_new;
        fval = f_new;
        rgrad = rg_new;
        if fval < best_f {
            best_f = fval;
            best_phi = phi.clone();
        }
        alpha0 = (alpha * 2.0).min(1e6);
    }
    best_phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_unit(n: usize, rng: &mut ChaCha12Rng) -> CVec {
        CVec::from_fn(n, |_, _| Cf64::from_polar(1.0, rng.gen_range(-3.1..3.1)))
    }

    #[test]
    fn phase_alignment_closed_form() {
        // Minimize -Re{g^H phi}: optimum phi_n = g_n / |g_n|.
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let g = CVec::from_fn(8, |_, _| {
            Cf64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 2.0
        });
        let g2 = g.clone();
        let f = move |phi: &CVec| {
            let val = -g2.dotc(phi).re;
            (val, g2.map(|z| -z))
        };
        let phi0 = random_unit(8, &mut rng);
        let phi = rcg_unit_modulus(f, &phi0, &RcgOptions::default());
        for i in 0..8 {
            let expect = g[i] / g[i].norm();
            assert!((phi[i] - expect).norm() < 1e-5, "entry {i}");
        }
    }

    #[test]
    fn constant_objective_returns_start() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let phi0 = random_unit(5, &mut rng);
        let f = |phi: &CVec| (1.0, CVec::zeros(phi.len()));
        let phi = rcg_unit_modulus(f, &phi0, &RcgOptions::default());
        assert!((phi - phi0).norm() < 1e-12);
    }

    #[test]
    fn tangent_projection_orthogonality() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let phi = random_unit(16, &mut rng);
        let g = CVec::from_fn(16, |_, _| {
            Cf64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let t = tangent_project(&phi, &g);
        for i in 0..16 {
            assert!((phi[i].conj() * t[i]).re.abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_beats_random_search() {
        // Maximize phi^H R phi (PSD R) == minimize the negative; compare to
        // the best of many random unit-modulus samples.
        let n = 8;
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let a = crate::CMat::from_fn(n, n, |_, _| {
            Cf64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let r = &a * a.adjoint();
        let rq = r.clone();
        let f = move |phi: &CVec| {
            let rp = &rq * phi;
            ((-phi.dotc(&rp)).re, rp.map(|z| z * -2.0))
        };
        let phi0 = random_unit(n, &mut rng);
        let phi = rcg_unit_modulus(f, &phi0, &RcgOptions::default());
        let val = phi.dotc(&(&r * &phi)).re;

        let mut best = f64::NEG_INFINITY;
        for _ in 0..1_000_000 {
            let cand = random_unit(n, &mut rng);
            let v = cand.dotc(&(&r * &cand)).re;
            if v > best {
                best = v;
            }
        }
        assert!(
            val >= best - 1e-9 * best.abs(),
            "rcg {val} vs random search {best}"
        );
    }

    #[test]
    fn output_unit_modulus() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let g = CVec::from_fn(6, |_, _| {
            Cf64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let g2 = g.clone();
        let f = move |phi: &CVec| ((-g2.dotc(phi)).re, g2.map(|z| -z));
        let phi = rcg_unit_modulus(f, &random_unit(6, &mut rng), &RcgOptions::default());
        for i in 0..6 {
            assert!((phi[i].norm() - 1.0).abs() < 1e-12);
        }
    }
}
