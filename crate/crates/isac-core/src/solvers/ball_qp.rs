//! Norm-ball quadratic program with one optional linear inequality:
//!
//! ```text
//! minimize    x^H Q x - Re{a^H x}
//! subject to  Re{c^H x} >= b        (optional)
//!             ||x||^2 <= radius^2
//! ```
//!
//! `Q` is Hermitian PSD (possibly singular). The KKT system
//! `(Q + s I) x = (a + t c)/2`, `s, t >= 0`, is solved exactly through one
//! eigendecomposition of `Q` and nested bisection: the inner level finds the
//! ball multiplier `s` for a given `t`, the outer level drives the linear
//! constraint to active/inactive complementarity in `t`.

use crate::{CMat, CVec, Cf64, IsacError, Result};
use nalgebra::SymmetricEigen;

/// Problem data for [`solve_ball_qp`].
#[derive(Debug, Clone)]
pub struct BallQpProblem {
    /// Hermitian PSD quadratic form.
    pub q: CMat,
    /// Linear objective term; the objective is `x^H Q x - Re{a^H x}`.
    pub a: CVec,
    /// Optional constraint `Re{c^H x} >= b`.
    pub lin: Option<(CVec, f64)>,
    /// Squared norm bound.
    pub radius2: f64,
}

struct EigenBasis {
    values: Vec<f64>,
    vectors: CMat,
    lambda_max: f64,
}

impl EigenBasis {
    fn new(q: &CMat) -> Self {
        let sym = (q + q.adjoint()).map(|z| z * 0.5);
        let eig = SymmetricEigen::new(sym);
        let values: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let lambda_max = values.iter().cloned().fold(0.0, f64::max);
        EigenBasis {
            values,
            vectors: eig.eigenvectors,
            lambda_max,
        }
    }

    /// Coordinates of `rhs` in the eigenbasis.
    fn coords(&self, rhs: &CVec) -> CVec {
        self.vectors.adjoint() * rhs
    }

    /// `||(Q + sI)^{-1} rhs||^2` given eigen-coordinates, or `None` if the
    /// pseudo-solution is unbounded (s = 0 with rhs energy in the null space).
    fn solve_norm2(&self, coords: &CVec, s: f64) -> Option<f64> {
        let null_cut = 1e-14 * self.lambda_max.max(1e-300);
        let mut acc = 0.0;
        for (i, &lam) in self.values.iter().enumerate() {
            let denom = lam + s;
            let c2 = coords[i].norm_sqr();
            if denom <= null_cut {
                if c2 > 0.0 {
                    return None;
                }
            } else {
                acc += c2 / (denom * denom);
            }
        }
        Some(acc)
    }

    /// Reconstruct `(Q + sI)^{-1} rhs` (null components dropped when s = 0).
    fn solve(&self, coords: &CVec, s: f64) -> CVec {
        let null_cut = 1e-14 * self.lambda_max.max(1e-300);
        let scaled = CVec::from_fn(coords.len(), |i, _| {
            let denom = self.values[i] + s;
            if denom <= null_cut {
                Cf64::new(0.0, 0.0)
            } else {
                coords[i] / denom
            }
        });
        &self.vectors * scaled
    }

    /// Minimize `x^H Q x - Re{rhs2^H x}` (with `rhs = rhs2 / 2`) over the
    /// ball: bisection on the ball multiplier `s`.
    fn ball_solve(&self, rhs: &CVec, radius2: f64) -> CVec {
        let coords = self.coords(rhs);
        // Interior candidate at s = 0.
        if let Some(n2) = self.solve_norm2(&coords, 0.0) {
            if n2 <= radius2 {
                return self.solve(&coords, 0.0);
            }
        }
        // Boundary: find s > 0 with ||x(s)||^2 = radius2 (decreasing in s).
        let mut hi = (rhs.norm() / radius2.sqrt())
            .max(self.lambda_max)
            .max(1e-300);
        for _ in 0..200 {
            match self.solve_norm2(&coords, hi) {
                Some(n2) if n2 < radius2 => break,
                _ => hi *= 4.0,
            }
        }
        let mut lo = 0.0;
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            match self.solve_norm2(&coords, mid) {
                Some(n2) if n2 <= radius2 => hi = mid,
                _ => lo = mid,
            }
        }
        self.solve(&coords, hi)
    }
}

/// Solve the ball-constrained QP; see the module docs for the KKT scheme.
pub fn solve_ball_qp(p: &BallQpProblem) -> Result<CVec> {
    let n = p.a.len();
    if p.q.nrows() != n || p.q.ncols() != n {
        return Err(IsacError::Shape(format!(
            "Q is {}x{}, expected {}x{}",
            p.q.nrows(),
            p.q.ncols(),
            n,
            n
        )));
    }
    if !(p.radius2 > 0.0) {
        return Err(IsacError::Solver("radius^2 must be positive".to_string()));
    }
    let radius = p.radius2.sqrt();
    let basis = EigenBasis::new(&p.q);
    let half_a = p.a.map(|z| z * 0.5);

    let (c, b) = match &p.lin {
        None => return Ok(basis.ball_solve(&half_a, p.radius2)),
        Some((c, b)) => (c, *b),
    };

    // Largest achievable Re{c^H x} on the ball.
    let reach = c.norm() * radius;
    let feas_tol = 1e-9 * (reach + b.abs() + 1.0);
    if b > reach + feas_tol {
        return Err(IsacError::Infeasible {
            required: b,
            achievable: reach,
        });
    }

    let lin_value = |x: &CVec| c.dotc(x).re;

    // Unconstrained-in-t candidate.
    let x0 = basis.ball_solve(&half_a, p.radius2);
    if lin_value(&x0) >= b - feas_tol {
        return Ok(x0);
    }

    // Outer bisection on the linear multiplier t: Re{c^H x(t)} grows with t.
    let rhs_for = |t: f64| CVec::from_fn(n, |i, _| half_a[i] + c[i] * (0.5 * t));
    let scale_t = (p.a.norm() + 1.0) / c.norm().max(1e-300);
    let mut t_hi = scale_t;
    let mut x_hi = basis.ball_solve(&rhs_for(t_hi), p.radius2);
    let mut grew = 0;
    while lin_value(&x_hi) < b && grew < 120 {
        t_hi *= 2.0;
        x_hi = basis.ball_solve(&rhs_for(t_hi), p.radius2);
        grew += 1;
    }
    if lin_value(&x_hi) < b - feas_tol {
        // Constraint only attainable in the limit (b == reach): return the
        // limiting matched point.
        let x_lim = c.map(|z| z * (radius / c.norm()));
        return Ok(x_lim);
    }
    let mut t_lo = 0.0;
    for _ in 0..200 {
        let t_mid = 0.5 * (t_lo + t_hi);
        if t_mid == t_lo || t_mid == t_hi {
            break;
        }
        let x_mid = basis.ball_solve(&rhs_for(t_mid), p.radius2);
        if lin_value(&x_mid) >= b {
            t_hi = t_mid;
            x_hi = x_mid;
        } else {
            t_lo = t_mid;
        }
    }
    Ok(x_hi)
}
