//! Planar scenario geometry: positions of BS, RIS, target and users, and the
//! derived angles/distances needed for LoS steering.
//!
//! Conventions: the BS sits at the origin with its array broadside along the
//! x-axis, so a point at `(x, y)` with `x > 0` is seen under the angle
//! `atan(y/x)`. The RIS lies at distance `d_BR` under angle `theta_BR`. A
//! point at RIS-local angle `psi` (target: `psi = theta_2`, users: their
//! configured angles) sits at `RIS + d * (sin psi, -cos psi)`.

use crate::config::SystemConfig;
use crate::{IsacError, Result};

/// Derived geometry for one scenario.
#[derive(Debug, Clone)]
pub struct SystemGeometry {
    /// Target DoA with respect to the BS (radians), in (-pi/2, pi/2).
    pub theta_1: f64,
    /// BS-target distance in meters.
    pub d_bt: f64,
    /// BS-user distances in meters, length `K`.
    pub d_bu: Vec<f64>,
    /// User DoAs with respect to the BS (radians).
    pub theta_bu: Vec<f64>,
    /// User angles around the RIS (radians).
    pub psi_users: Vec<f64>,
}

/// Planar position helper.
fn ris_local(origin: (f64, f64), d: f64, psi: f64) -> (f64, f64) {
    (origin.0 + d * psi.sin(), origin.1 - d * psi.cos())
}

/// Bearing of a point from the BS at the origin; errors when the point falls
/// on (or behind) the array plane where `atan(y/x)` is meaningless.
fn bs_bearing(p: (f64, f64), what: &str) -> Result<f64> {
    if p.0 <= 1e-12 {
        return Err(IsacError::Geometry(format!(
            "{what} lies on or behind the BS array plane (x = {:.3e})",
            p.0
        )));
    }
    Ok((p.1 / p.0).atan())
}

/// Derive target and user placement from the configured scenario.
///
/// The target DoA reproduces
/// `theta_1 = atan((d_BR sin theta_BR - d_RT cos theta_2) / (d_BR cos theta_BR + d_RT sin theta_2))`,
/// which is exactly the bearing of `RIS + d_RT (sin theta_2, -cos theta_2)`
/// from the origin. Setting `d_RT = 0` therefore gives `theta_1 = theta_BR`.
pub fn derive_geometry(cfg: &SystemConfig) -> Result<SystemGeometry> {
    if !(cfg.d_br > 0.0) || cfg.d_rt < 0.0 || !(cfg.d_ru > 0.0) {
        return Err(IsacError::Geometry(
            "d_BR and d_RU must be positive, d_RT nonnegative".to_string(),
        ));
    }
    let ris = (cfg.d_br * cfg.theta_br.cos(), cfg.d_br * cfg.theta_br.sin());
    let target = ris_local(ris, cfg.d_rt, cfg.theta_2);
    let theta_1 = bs_bearing(target, "target")?;
    let d_bt = (target.0 * target.0 + target.1 * target.1).sqrt();

    let psi_users = cfg.user_angles();
    let mut d_bu = Vec::with_capacity(cfg.k);
    let mut theta_bu = Vec::with_capacity(cfg.k);
    for (k, &psi) in psi_users.iter().enumerate() {
        let p = ris_local(ris, cfg.d_ru, psi);
        theta_bu.push(bs_bearing(p, &format!("user {k}"))?);
        d_bu.push((p.0 * p.0 + p.1 * p.1).sqrt());
    }
    Ok(SystemGeometry {
        theta_1,
        d_bt,
        d_bu,
        theta_bu,
        psi_users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg_with(d_br: f64, d_rt: f64, theta_br: f64, theta_2: f64) -> SystemConfig {
        SystemConfig {
            d_br,
            d_rt,
            theta_br,
            theta_2,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn target_on_ris_bearing_when_colocated() {
        let cfg = cfg_with(50.0, 0.0, 0.3, PI / 4.0);
        let geo = derive_geometry(&cfg).unwrap();
        assert!((geo.theta_1 - 0.3).abs() < 1e-14);
        assert!((geo.d_bt - 50.0).abs() < 1e-10);
    }

    #[test]
    fn paper_default_angle() {
        // d_BR = 50, d_RT = 3, theta_BR = theta_2 = pi/4:
        // atan((50 sin(pi/4) - 3 cos(pi/4)) / (50 cos(pi/4) + 3 sin(pi/4)))
        //   = atan(33.234.. / 37.476..) ~= 0.7252 rad.
        let cfg = cfg_with(50.0, 3.0, PI / 4.0, PI / 4.0);
        let geo = derive_geometry(&cfg).unwrap();
        let num = 50.0 * (PI / 4.0).sin() - 3.0 * (PI / 4.0).cos();
        let den = 50.0 * (PI / 4.0).cos() + 3.0 * (PI / 4.0).sin();
        assert!((geo.theta_1 - (num / den).atan()).abs() < 1e-14);
        assert!((geo.theta_1 - 0.7252).abs() < 5e-4);
    }

    #[test]
    fn matches_coordinate_oracle() {
        // Independent placement of BS/RIS/target in the plane and direct
        // angle measurement.
        let cases = [
            (50.0, 50.0, 0.0, PI / 2.0),
            (20.0, 5.0, 0.4, -0.7),
            (10.0, 2.0, -0.5, 1.1),
        ];
        for &(d_br, d_rt, theta_br, theta_2) in &cases {
            let cfg = cfg_with(d_br, d_rt, theta_br, theta_2);
            let geo = derive_geometry(&cfg).unwrap();
            let ris = (d_br * theta_br.cos(), d_br * theta_br.sin());
            let tgt = (ris.0 + d_rt * theta_2.sin(), ris.1 - d_rt * theta_2.cos());
            assert!((geo.theta_1 - (tgt.1 / tgt.0).atan()).abs() < 1e-12);
            assert!((geo.d_bt - tgt.0.hypot(tgt.1)).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_geometry_errors() {
        // Target placed on the array plane: x-coordinate zero.
        let cfg = cfg_with(1.0, 1.0, PI / 2.0 - 1e-9, PI);
        assert!(derive_geometry(&cfg).is_err());
    }

    #[test]
    fn theta1_in_open_halfplane() {
        for i in 0..100 {
            let t = -1.3 + 2.6 * i as f64 / 99.0;
            let cfg = cfg_with(30.0, 4.0, t, 0.9);
            if let Ok(geo) = derive_geometry(&cfg) {
                assert!(geo.theta_1 > -PI / 2.0 && geo.theta_1 < PI / 2.0);
            }
        }
    }
}
