//! Self-contained small-scale solvers shared by both design algorithms.
//!
//! Nothing here knows about channels or beamformers; the solvers are
//! specialized to the exact problem shapes the algorithms produce (norm-ball
//! QP with one linear inequality, a dense 4x4-LMI SDP, phase optimization on
//! the unit-modulus torus) and stay small enough to verify against brute
//! force in the tests.

mod ball_qp;
mod polydisc_qp;
mod rcg;
mod sdp;

pub use ball_qp::{solve_ball_qp, BallQpProblem};
pub use polydisc_qp::{solve_polydisc_qp, PolydiscQp};
pub use rcg::{rcg_unit_modulus, RcgOptions};
pub use sdp::{fisher_lmi, solve_small_sdp, SdpProblem, SdpSolution};

use crate::{CMat, Cf64};
use nalgebra::SymmetricEigen;

/// Largest eigenvalue of a Hermitian matrix (symmetrized internally).
pub fn max_eigenvalue(h: &CMat) -> f64 {
    let sym = (h + h.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(sym);
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// All eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let sym = (h + h.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(sym);
    let mut v: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Squared spectral norm `sigma_max(A)^2 = lambda_max(A^H A)`.
pub fn spectral_norm_sq(a: &CMat) -> f64 {
    max_eigenvalue(&(a.adjoint() * a)).max(0.0)
}

/// Entrywise phase projection: maps each entry to its unit-modulus phase,
/// sending exact zeros to 1 (phase 0).
pub fn phase_project(x: &crate::CVec) -> crate::CVec {
    x.map(|z| {
        let r = z.norm();
        if r == 0.0 {
            Cf64::new(1.0, 0.0)
        } else {
            z / r
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CVec;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn max_eig_identity_and_diag() {
        let id = CMat::identity(5, 5);
        assert!((max_eigenvalue(&id) - 1.0).abs() < 1e-12);
        let d = CMat::from_diagonal(&CVec::from_vec(vec![
            Cf64::new(3.0, 0.0),
            Cf64::new(-1.0, 0.0),
            Cf64::new(2.0, 0.0),
        ]));
        assert!((max_eigenvalue(&d) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn max_eig_matches_full_decomposition() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a = CMat::from_fn(8, 8, |_, _| {
                Cf64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let h = (&a + a.adjoint()).map(|z| z * 0.5);
            let lam = max_eigenvalue(&h);
            let all = hermitian_eigenvalues(&h);
            let lam_ref = *all.last().unwrap();
            assert!((lam - lam_ref).abs() <= 1e-8 * (1.0 + lam_ref.abs()));
            // Rayleigh quotient never exceeds the reported maximum.
            for _ in 0..20 {
                let x = CVec::from_fn(8, |_, _| {
                    Cf64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let q = x.dotc(&(&h * &x)).re / x.norm_squared();
                assert!(q <= lam + 1e-8 * (1.0 + lam.abs()));
            }
        }
    }

    #[test]
    fn phase_project_zero_maps_to_one() {
        let x = CVec::from_vec(vec![Cf64::new(0.0, 0.0), Cf64::new(0.0, -2.0)]);
        let p = phase_project(&x);
        assert_eq!(p[0], Cf64::new(1.0, 0.0));
        assert!((p[1] - Cf64::new(0.0, -1.0)).norm() < 1e-15);
    }
}
