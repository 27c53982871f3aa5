//! Dense log-det barrier method for the small SDP that updates the CRB
//! auxiliaries `(J, f)`:
//!
//! ```text
//! minimize    sum_i |target_i - f_i|^2
//! subject to  Tr{J^{-1}} <= eps,  J >= 0,
//!             LMI(f, J) >= 0
//! ```
//!
//! `LMI(f, J)` is the 4x4 Schur-complement form of the Fisher-information
//! constraint: the theta-theta block `c1 Re{[[f1, f2],[f2, f4]]} - J`, the
//! theta-alpha coupling `c2 Re{alpha^* [f3; f5] [1 j]}`, and the alpha-alpha
//! block `c2 Re{f6} I2`, with `c1 = 2L|alpha|^2/sigma_r^2` and
//! `c2 = 2L/sigma_r^2`. The trace-inverse bound is rewritten through a
//! second Schur complement `[[J, I], [I, Y]] >= 0`, `Tr{Y} <= eps`.
//!
//! The decision vector has 14 reals (8 LMI-coupled parts of `f`, 3 of `J`,
//! 3 of `Y`); imaginary parts of `f1, f2, f4, f6` never enter a constraint
//! and are matched to their targets in closed form. Everything is rescaled
//! to O(1) before the barrier path runs.

use crate::{Cf64, IsacError, Result};
use nalgebra::{Matrix2, Matrix4};

/// Problem data for [`solve_small_sdp`].
#[derive(Debug, Clone)]
pub struct SdpProblem {
    /// Least-squares targets for the six Fisher-element slots.
    pub targets: [Cf64; 6],
    /// Known complex RCS.
    pub alpha_t: Cf64,
    /// Factor mapping Fisher slots to information units: the FIM blocks are
    /// `fisher_scale * |alpha|^2 Re{..f..}`, `fisher_scale * Re{alpha^* ..}`,
    /// and `fisher_scale * Re{f6} I2` (equals `2L/sigma_r^2` in raw units).
    pub fisher_scale: f64,
    /// Per-slot least-squares weights (the objective is
    /// `sum_i weights_i |target_i - f_i|^2`).
    pub weights: [f64; 6],
    /// Trace-inverse bound.
    pub eps: f64,
}

/// Solution of the `(J, f)` subproblem.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub j: Matrix2<f64>,
    pub f: [Cf64; 6],
    pub objective: f64,
    pub newton_steps: usize,
}

const NV: usize = 14;

struct BarrierProblem {
    targets_hat: [f64; 8],
    weights: [f64; 8],
    eps_hat: f64,
}

fn lmi1(x: &[f64; NV]) -> Matrix4<f64> {
    Matrix4::new(
        x[0] - x[8],
        x[1] - x[9],
        x[2],
        x[3],
        x[1] - x[9],
        x[4] - x[10],
        x[5],
        x[6],
        x[2],
        x[5],
        x[7],
        0.0,
        x[3],
        x[6],
        0.0,
        x[7],
    )
}

fn lmi2(x: &[f64; NV]) -> Matrix4<f64> {
    Matrix4::new(
        x[8], x[9], 1.0, 0.0, x[9], x[10], 0.0, 1.0, 1.0, 0.0, x[11], x[12], 0.0, 1.0, x[12], x[13],
    )
}

/// Constant derivative matrices dS/dx_i for both LMIs, listed as
/// (variable index, matrix).
fn lmi1_basis() -> Vec<(usize, Matrix4<f64>)> {
    let e = |r: usize, c: usize| {
        let mut m = Matrix4::zeros();
        m[(r, c)] = 1.0;
        if r != c {
            m[(c, r)] = 1.0;
        }
        m
    };
    vec![
        (0, e(0, 0)),
        (1, e(0, 1)),
        (2, e(0, 2)),
        (3, e(0, 3)),
        (4, e(1, 1)),
        (5, e(1, 2)),
        (6, e(1, 3)),
        (7, e(2, 2) + e(3, 3)),
        (8, -e(0, 0)),
        (9, -e(0, 1)),
        (10, -e(1, 1)),
    ]
}

fn lmi2_basis() -> Vec<(usize, Matrix4<f64>)> {
    let e = |r: usize, c: usize| {
        let mut m = Matrix4::zeros();
        m[(r, c)] = 1.0;
        if r != c {
            m[(c, r)] = 1.0;
        }
        m
    };
    vec![
        (8, e(0, 0)),
        (9, e(0, 1)),
        (10, e(1, 1)),
        (11, e(2, 2)),
        (12, e(2, 3)),
        (13, e(3, 3)),
    ]
}

impl BarrierProblem {
    fn objective(&self, x: &[f64; NV]) -> f64 {
        (0..8)
            .map(|i| self.weights[i] * (x[i] - self.targets_hat[i]).powi(2))
            .sum()
    }

    fn in_domain(&self, x: &[f64; NV]) -> bool {
        let s3 = self.eps_hat - x[11] - x[13];
        s3 > 0.0 && lmi1(x).cholesky().is_some() && lmi2(x).cholesky().is_some()
    }

    /// Barrier value t*q(x) - log det S1 - log det S2 - log s3.
    fn merit(&self, x: &[f64; NV], t: f64) -> f64 {
        let ld1 = lmi1(x)
            .cholesky()
            .map(|c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>());
        let ld2 = lmi2(x)
            .cholesky()
            .map(|c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>());
        let s3 = self.eps_hat - x[11] - x[13];
        match (ld1, ld2) {
            (Some(a), Some(b)) if s3 > 0.0 => t * self.objective(x) - a - b - s3.ln(),
            _ => f64::INFINITY,
        }
    }

    fn grad_hess(
        &self,
        x: &[f64; NV],
        t: f64,
        basis1: &[(usize, Matrix4<f64>)],
        basis2: &[(usize, Matrix4<f64>)],
    ) -> (nalgebra::SVector<f64, NV>, nalgebra::SMatrix<f64, NV, NV>) {
        let mut g = nalgebra::SVector::<f64, NV>::zeros();
        let mut h = nalgebra::SMatrix::<f64, NV, NV>::zeros();
        for i in 0..8 {
            g[i] += t * 2.0 * self.weights[i] * (x[i] - self.targets_hat[i]);
            h[(i, i)] += t * 2.0 * self.weights[i];
        }
        for (s, basis) in [(lmi1(x), basis1), (lmi2(x), basis2)] {
            let sinv = s.try_inverse().expect("domain keeps LMIs invertible");
            // Cache S^{-1} G_i once per variable.
            let prods: Vec<(usize, Matrix4<f64>)> =
                basis.iter().map(|(i, gi)| (*i, sinv * gi)).collect();
            for (i, pi) in &prods {
                g[*i] -= pi.trace();
                for (j, pj) in &prods {
                    if j < i {
                        continue;
                    }
                    let v = (pi * pj).trace();
                    h[(*i, *j)] += v;
                    if i != j {
                        h[(*j, *i)] += v;
                    }
                }
            }
        }
        let s3 = self.eps_hat - x[11] - x[13];
        for i in [11usize, 13] {
            g[i] += 1.0 / s3;
            for j in [11usize, 13] {
                h[(i, j)] += 1.0 / (s3 * s3);
            }
        }
        (g, h)
    }
}

/// Solve the `(J, f)` SDP; see module docs for the formulation.
pub fn solve_small_sdp(p: &SdpProblem) -> Result<SdpSolution> {
    if !(p.eps > 0.0) {
        return Err(IsacError::Solver("eps must be positive".to_string()));
    }
    if p.alpha_t.norm() == 0.0 {
        return Err(IsacError::Solver("alpha_t must be nonzero".to_string()));
    }
    if !(p.fisher_scale > 0.0) {
        return Err(IsacError::Solver(
            "fisher_scale must be positive".to_string(),
        ));
    }
    let c1 = p.fisher_scale * p.alpha_t.norm_sqr();
    let c2 = p.fisher_scale;
    let ac = p.alpha_t.conj();
    let z3 = ac * p.targets[2];
    let z5 = ac * p.targets[4];
    let y_targets = [
        c1 * p.targets[0].re,
        c1 * p.targets[1].re,
        c2 * z3.re,
        -c2 * z3.im,
        c1 * p.targets[3].re,
        c2 * z5.re,
        -c2 * z5.im,
        c2 * p.targets[5].re,
    ];
    let scale = y_targets
        .iter()
        .fold(4.0 / p.eps, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    let mut targets_hat = [0.0; 8];
    for i in 0..8 {
        targets_hat[i] = y_targets[i] / scale;
    }
    let w_c1 = (scale / c1).powi(2);
    let w_c2 = (scale / c2).powi(2);
    let w_f35 = w_c2 / p.alpha_t.norm_sqr();
    let sw = &p.weights;
    let weights_raw = [
        w_c1 * sw[0],
        w_c1 * sw[1],
        w_f35 * sw[2],
        w_f35 * sw[2],
        w_c1 * sw[3],
        w_f35 * sw[4],
        w_f35 * sw[4],
        w_c2 * sw[5],
    ];
    let wmax = weights_raw.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let mut weights = [0.0; 8];
    for i in 0..8 {
        weights[i] = weights_raw[i] / wmax;
    }
    let eps_hat = p.eps * scale;

    let prob = BarrierProblem {
        targets_hat,
        weights,
        eps_hat,
    };

    // Strictly feasible start: J scaled to the trace-inverse interior,
    // diagonal LMI1 slack of 1.
    let j0 = 4.0 / eps_hat;
    let y0 = 1.5 / j0;
    let mut x: [f64; NV] = [
        j0 + 1.0,
        0.0,
        0.0,
        0.0,
        j0 + 1.0,
        0.0,
        0.0,
        1.0,
        j0,
        0.0,
        j0,
        y0,
        0.0,
        y0,
    ];
    debug_assert!(prob.in_domain(&x));

    let basis1 = lmi1_basis();
    let basis2 = lmi2_basis();
    let m_total = 9.0; // barrier degrees: two 4x4 log-dets + one log
    let mut t = 1.0;
    let mut newton_steps = 0usize;
    while t < 1e15 {
        for _ in 0..40 {
            let (g, h) = prob.grad_hess(&x, t, &basis1, &basis2);
            let mut hreg = h;
            let ridge = 1e-12 * (1.0 + h.trace().abs());
            for i in 0..NV {
                hreg[(i, i)] += ridge;
            }
            let chol = match hreg.cholesky() {
                Some(c) => c,
                None => {
                    for i in 0..NV {
                        hreg[(i, i)] += 1e-6 * (1.0 + h.trace().abs());
                    }
                    hreg.cholesky().ok_or_else(|| {
                        IsacError::Solver("SDP Newton system not positive definite".to_string())
                    })?
                }
            };
            let d = chol.solve(&(-g));
            let decrement = -g.dot(&d);
            newton_steps += 1;
            if !decrement.is_finite() {
                return Err(IsacError::Solver(
                    "SDP Newton decrement not finite".to_string(),
                ));
            }
            if decrement <= 1e-10 * (1.0 + t * prob.objective(&x)) {
                break;
            }
            // Backtrack into the domain with sufficient decrease.
            let base = prob.merit(&x, t);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let mut cand = x;
                for i in 0..NV {
                    cand[i] += alpha * d[i];
                }
                if prob.in_domain(&cand) && prob.merit(&cand, t) <= base - 0.25 * alpha * decrement
                {
                    x = cand;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if m_total / t <= 1e-8 * (1.0 + prob.objective(&x)) {
            break;
        }
        t *= 10.0;
    }

    let j = Matrix2::new(x[8], x[9], x[9], x[10]).map(|v| v * scale);
    let alpha_back = p.alpha_t / p.alpha_t.norm_sqr();
    let f = [
        Cf64::new(scale * x[0] / c1, p.targets[0].im),
        Cf64::new(scale * x[1] / c1, p.targets[1].im),
        alpha_back * Cf64::new(scale * x[2] / c2, -scale * x[3] / c2),
        Cf64::new(scale * x[4] / c1, p.targets[3].im),
        alpha_back * Cf64::new(scale * x[5] / c2, -scale * x[6] / c2),
        Cf64::new(scale * x[7] / c2, p.targets[5].im),
    ];
    let objective: f64 = f
        .iter()
        .zip(p.targets.iter())
        .zip(p.weights.iter())
        .map(|((fi, ti), wi)| wi * (fi - ti).norm_sqr())
        .sum();

    // Post-conditions: trace-inverse within tolerance, LMIs PSD.
    let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(0, 1)];
    if det <= 0.0 {
        return Err(IsacError::Solver("SDP returned a singular J".to_string()));
    }
    let tr_inv = (j[(0, 0)] + j[(1, 1)]) / det;
    if tr_inv > p.eps * (1.0 + 1e-6) {
        return Err(IsacError::Solver(format!(
            "SDP trace-inverse bound violated: {tr_inv} > {}",
            p.eps
        )));
    }
    Ok(SdpSolution {
        j,
        f,
        objective,
        newton_steps,
    })
}

/// Rebuild the 4x4 Fisher LMI from raw `(f, J)` values (used by callers to
/// re-verify feasibility on their own data).
pub fn fisher_lmi(
    f: &[Cf64; 6],
    j: &Matrix2<f64>,
    alpha_t: Cf64,
    fisher_scale: f64,
) -> Matrix4<f64> {
    let c1 = fisher_scale * alpha_t.norm_sqr();
    let c2 = fisher_scale;
    let z3 = alpha_t.conj() * f[2];
    let z5 = alpha_t.conj() * f[4];
    Matrix4::new(
        c1 * f[0].re - j[(0, 0)],
        c1 * f[1].re - j[(0, 1)],
        c2 * z3.re,
        -c2 * z3.im,
        c1 * f[1].re - j[(0, 1)],
        c1 * f[3].re - j[(1, 1)],
        c2 * z5.re,
        -c2 * z5.im,
        c2 * z3.re,
        c2 * z5.re,
        c2 * f[5].re,
        0.0,
        -c2 * z3.im,
        -c2 * z5.im,
        0.0,
        c2 * f[5].re,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_problem() -> SdpProblem {
        SdpProblem {
            targets: [Cf64::new(0.0, 0.0); 6],
            alpha_t: Cf64::new(1.0, 0.0),
            fisher_scale: 128.0,
            weights: [1.0; 6],
            eps: 0.5,
        }
    }

    fn min_eig4(m: &Matrix4<f64>) -> f64 {
        m.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn feasible_targets_returned_exactly() {
        // Generous targets: LMI already comfortably feasible with Tr{J^-1}
        // slack, so the least-squares optimum is the target itself.
        let mut p = base_problem();
        let c1 = p.fisher_scale;
        p.targets = [
            Cf64::new(100.0 / c1, 0.3),
            Cf64::new(0.0, -0.1),
            Cf64::new(1.0 / c1, 2.0 / c1),
            Cf64::new(80.0 / c1, 0.0),
            Cf64::new(-1.0 / c1, 0.5 / c1),
            Cf64::new(90.0 / c1, 0.0),
        ];
        let sol = solve_small_sdp(&p).unwrap();
        for i in 0..6 {
            assert!(
                (sol.f[i] - p.targets[i]).norm() < 1e-4 * (1.0 + p.targets[i].norm()),
                "slot {i}: {} vs {}",
                sol.f[i],
                p.targets[i]
            );
        }
        assert!(sol.objective < 1e-7);
        let lmi = fisher_lmi(&sol.f, &sol.j, p.alpha_t, p.fisher_scale);
        assert!(min_eig4(&lmi) >= -1e-7);
    }

    #[test]
    fn huge_eps_relaxes_j() {
        let mut p = base_problem();
        p.eps = 1e9;
        let c1 = p.fisher_scale;
        p.targets = [
            Cf64::new(5.0 / c1, 0.0),
            Cf64::new(1.0 / c1, 0.0),
            Cf64::new(0.5 / c1, 0.0),
            Cf64::new(4.0 / c1, 0.0),
            Cf64::new(-0.5 / c1, 0.0),
            Cf64::new(6.0 / c1, 0.0),
        ];
        let sol = solve_small_sdp(&p).unwrap();
        for i in 0..6 {
            assert!(
                (sol.f[i] - p.targets[i]).norm() < 1e-3 * (1.0 + p.targets[i].norm()),
                "slot {i}"
            );
        }
    }

    #[test]
    fn binding_trace_constraint() {
        // Small f-targets force J down to the trace-inverse boundary.
        let mut p = base_problem();
        p.eps = 0.1;
        p.targets = [
            Cf64::new(1e-4, 0.0),
            Cf64::new(0.0, 0.0),
            Cf64::new(0.0, 0.0),
            Cf64::new(1e-4, 0.0),
            Cf64::new(0.0, 0.0),
            Cf64::new(1e-3, 0.0),
        ];
        let sol = solve_small_sdp(&p).unwrap();
        let det = sol.j[(0, 0)] * sol.j[(1, 1)] - sol.j[(0, 1)] * sol.j[(0, 1)];
        let tr_inv = (sol.j[(0, 0)] + sol.j[(1, 1)]) / det;
        assert!(tr_inv <= p.eps * (1.0 + 1e-6));
        // The LMI forces c1*f1 >= J11 etc., so f cannot reach the tiny
        // targets; optimum sits near the feasibility boundary.
        let lmi = fisher_lmi(&sol.f, &sol.j, p.alpha_t, p.fisher_scale);
        assert!(min_eig4(&lmi) >= -1e-7);
        assert!(sol.objective > 0.0);
    }

    #[test]
    fn one_free_scalar_matches_grid_search() {
        // f2, f3, f5 targeted at 0 (kept there by the objective), f4 and f6
        // generous: only f1 is effectively constrained. With diagonal J the
        // feasible set is c1*Re{f1} >= 1/(eps - 1/(c1*Re{f4_opt})) and the
        // optimum is the projection of the target onto it.
        let mut p = base_problem();
        p.eps = 0.25;
        let c = p.fisher_scale; // c1 == c2 for alpha = 1
                                // f4 and f6 comfortably slack so their optima stay at the targets,
                                // leaving Re{f1} as the single effectively constrained scalar.
        let f4 = 50.0 / c;
        let f6 = 50.0 / c;
        let t1 = 2.0 / c; // small target, constraint will bind
        p.targets = [
            Cf64::new(t1, 0.0),
            Cf64::new(0.0, 0.0),
            Cf64::new(0.0, 0.0),
            Cf64::new(f4, 0.0),
            Cf64::new(0.0, 0.0),
            Cf64::new(f6, 0.0),
        ];
        let sol = solve_small_sdp(&p).unwrap();

        // Grid-search oracle over Re{f1}: J22 rises to its LMI cap c*f4,
        // so the J11 floor from Tr{J^-1} <= eps is 1/(eps - 1/(c*f4)), and
        // feasibility of f1 requires c*f1 >= that floor.
        let j22_max = c * f4;
        let j11_floor = 1.0 / (p.eps - 1.0 / j22_max);
        let mut best = f64::INFINITY;
        let mut best_f1 = 0.0;
        for i in 0..10_000 {
            let f1 = (i as f64) * (20.0 / c) / 10_000.0;
            if c * f1 < j11_floor {
                continue;
            }
            let obj = (f1 - t1).powi(2);
            if obj < best {
                best = obj;
                best_f1 = f1;
            }
        }
        assert!(
            (sol.f[0].re - best_f1).abs() <= 1e-3 * (1.0 + best_f1.abs()),
            "solver {} vs grid {}",
            sol.f[0].re,
            best_f1
        );
    }
}
