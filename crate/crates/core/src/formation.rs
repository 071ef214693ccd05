//! Leader-follower formation geometry.
//!
//! The baseline lies on the world x-axis: the leader sits at `g - b/2` facing
//! yaw 0 and the follower at `g + b/2` facing yaw pi, so the two docking faces
//! look at each other.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::Vec3;

/// Lower clip of the mission timeout, s.
pub const MIN_TIMEOUT: f64 = 30.0;
/// Fraction of the slower vehicle's capability used as cruise speed.
pub const CRUISE_FRACTION: f64 = 0.8;

pub const LEADER_YAW: f64 = 0.0;
pub const FOLLOWER_YAW: f64 = PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationSpec {
    /// Desired formation centre, m.
    pub g: Vec3,
    /// Docking separation along world x, m.
    pub d_dock: f64,
    pub v_form_leader: f64,
    pub v_form_follower: f64,
    /// User timeout cap, s.
    pub t_usr: f64,
}

impl Default for FormationSpec {
    fn default() -> Self {
        Self {
            g: Vec3::new(1.5, 0.8, 2.0),
            d_dock: 0.46,
            v_form_leader: 0.5,
            v_form_follower: 0.5,
            t_usr: 120.0,
        }
    }
}

impl FormationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("spec.{m}")));
        if !self.g.iter().all(|c| c.is_finite()) {
            return bad("g must be finite");
        }
        if !(self.d_dock > 0.0) {
            return bad("d_dock must be > 0");
        }
        if !(self.v_form_leader > 0.0 && self.v_form_follower > 0.0) {
            return bad("v_form_leader and v_form_follower must be > 0");
        }
        if !(self.t_usr > 0.0) {
            return bad("t_usr must be > 0");
        }
        Ok(())
    }

    /// True when `t_usr` lies below the timeout floor, so the user cap wins.
    pub fn timeout_bounds_cross(&self) -> bool {
        self.t_usr < MIN_TIMEOUT
    }

    pub fn baseline(&self) -> Vec3 {
        Vec3::new(self.d_dock, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationTargets {
    pub p_l_star: Vec3,
    pub p_f_star: Vec3,
    pub psi_l_star: f64,
    pub psi_f_star: f64,
}

pub fn formation_targets(spec: &FormationSpec) -> FormationTargets {
    let half = 0.5 * spec.baseline();
    FormationTargets {
        p_l_star: spec.g - half,
        p_f_star: spec.g + half,
        psi_l_star: LEADER_YAW,
        psi_f_star: FOLLOWER_YAW,
    }
}

/// Synchronised cruise speed shared by both vehicles.
pub fn sync_speed(spec: &FormationSpec) -> f64 {
    CRUISE_FRACTION * spec.v_form_leader.min(spec.v_form_follower)
}

/// Docking timeout from the commanded displacement of the formation centre.
///
/// If `t_usr` is below the 30 s floor the user cap is returned; callers
/// should surface [`FormationSpec::timeout_bounds_cross`] as a warning.
pub fn mission_timeout(spec: &FormationSpec, p_l: &Vec3, p_f: &Vec3) -> f64 {
    let centre = 0.5 * (p_l + p_f);
    let t_hat = (spec.g - centre).norm() / sync_speed(spec);
    (2.0 * t_hat).max(MIN_TIMEOUT).min(spec.t_usr)
}

/// `||p_F - p_L|| - d_dock`
pub fn baseline_error(p_l: &Vec3, p_f: &Vec3, d_dock: f64) -> f64 {
    (p_f - p_l).norm() - d_dock
}

/// Deviation from opposing yaw, wrapped into (-pi, pi].
pub fn yaw_error(psi_l: f64, psi_f: f64) -> f64 {
    wrap((psi_f - psi_l) - PI)
}

pub fn relative_speed(v_l: &Vec3, v_f: &Vec3) -> f64 {
    (v_f - v_l).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(g: Vec3, d: f64) -> FormationSpec {
        FormationSpec {
            g,
            d_dock: d,
            ..FormationSpec::default()
        }
    }

    #[test]
    fn targets_hand_evaluated() {
        let t = formation_targets(&spec(Vec3::new(1.0, 2.0, 0.5), 0.46));
        assert!((t.p_l_star - Vec3::new(0.77, 2.0, 0.5)).norm() < 1e-15);
        assert!((t.p_f_star - Vec3::new(1.23, 2.0, 0.5)).norm() < 1e-15);
        assert_eq!(t.psi_l_star, 0.0);
        assert_eq!(t.psi_f_star, PI);
    }

    #[test]
    fn targets_symmetric_about_origin() {
        let t = formation_targets(&spec(Vec3::zeros(), 0.8));
        assert_eq!(t.p_l_star, -t.p_f_star);
    }

    #[test]
    fn cruise_speed() {
        let mut s = FormationSpec {
            v_form_leader: 0.3,
            v_form_follower: 0.5,
            ..FormationSpec::default()
        };
        assert!((sync_speed(&s) - 0.24).abs() < 1e-15);
        std::mem::swap(&mut s.v_form_leader, &mut s.v_form_follower);
        assert!((sync_speed(&s) - 0.24).abs() < 1e-15);
        s.v_form_follower = 0.5;
        assert!((sync_speed(&s) - 0.40).abs() < 1e-15);
    }

    fn timeout_for(dist: f64, t_usr: f64) -> f64 {
        // v_sync = 0.8 * 0.3 = 0.24
        let s = FormationSpec {
            g: Vec3::new(dist, 0.0, 0.0),
            v_form_leader: 0.3,
            v_form_follower: 0.5,
            t_usr,
            ..FormationSpec::default()
        };
        mission_timeout(&s, &Vec3::new(-0.2, 0.0, 0.0), &Vec3::new(0.2, 0.0, 0.0))
    }

    #[test]
    fn timeout_cases() {
        // t_hat = 6 / 0.24 = 25 -> 50
        assert!((timeout_for(6.0, 120.0) - 50.0).abs() < 1e-12);
        // 2 t_hat = 5 -> floor
        assert_eq!(timeout_for(0.6, 120.0), 30.0);
        // 2 t_hat = 200 -> cap
        assert_eq!(timeout_for(24.0, 120.0), 120.0);
        // crossed bounds -> user cap
        assert_eq!(timeout_for(0.6, 20.0), 20.0);
        assert!(FormationSpec {
            t_usr: 20.0,
            ..FormationSpec::default()
        }
        .timeout_bounds_cross());
    }

    #[test]
    fn baseline_error_cases() {
        let l = Vec3::new(0.0, 0.0, 1.0);
        assert_eq!(baseline_error(&l, &Vec3::new(0.46, 0.0, 1.0), 0.46), 0.0);
        assert!((baseline_error(&l, &Vec3::new(0.5, 0.0, 1.0), 0.46) - 0.04).abs() < 1e-15);
        assert!((baseline_error(&l, &Vec3::new(0.3, 0.4, 1.0), 0.46) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn yaw_error_cases() {
        assert_eq!(yaw_error(0.0, PI), 0.0);
        assert!((yaw_error(0.1, PI) - (-0.1)).abs() < 1e-15);
        assert!((yaw_error(0.0, -PI + 0.05) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn relative_speed_cases() {
        let v = Vec3::new(0.2, -0.1, 0.3);
        assert_eq!(relative_speed(&v, &v), 0.0);
        assert!((relative_speed(&Vec3::zeros(), &Vec3::new(0.3, 0.0, 0.4)) - 0.5).abs() < 1e-15);
    }

    fn v3(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn geometry_identities(g in v3(50.0), d in 0.01f64..5.0) {
            let t = formation_targets(&spec(g, d));
            prop_assert!((0.5 * (t.p_l_star + t.p_f_star) - g).amax() < 1e-12);
            prop_assert!(((t.p_f_star - t.p_l_star).norm() - d).abs() < 1e-12);
        }

        #[test]
        fn sync_speed_bounds(a in 0.01f64..5.0, b in 0.01f64..5.0, bump in 0.0f64..1.0) {
            let s = FormationSpec { v_form_leader: a, v_form_follower: b, ..FormationSpec::default() };
            let v = sync_speed(&s);
            prop_assert!(v <= 0.8 * a + 1e-15 && v <= 0.8 * b + 1e-15);
            let faster = FormationSpec { v_form_leader: a + bump, ..s };
            prop_assert!(sync_speed(&faster) >= v);
        }

        #[test]
        fn timeout_within_bounds(g in v3(200.0), c in v3(10.0), t_usr in 1.0f64..500.0) {
            let s = FormationSpec { g, t_usr, ..FormationSpec::default() };
            let t = mission_timeout(&s, &(c - Vec3::new(0.2, 0.0, 0.0)), &(c + Vec3::new(0.2, 0.0, 0.0)));
            prop_assert!(t >= MIN_TIMEOUT.min(t_usr) && t <= t_usr);
        }

        #[test]
        fn opposing_yaw_is_zero_error(psi in -10.0f64..10.0) {
            prop_assert!(yaw_error(wrap(psi), wrap(psi + PI)).abs() < 1e-9);
        }

        #[test]
        fn baseline_error_invariances(l in v3(5.0), f in v3(5.0), shift in v3(10.0), yaw in -PI..PI) {
            let e = baseline_error(&l, &f, 0.46);
            prop_assert!((baseline_error(&(l + shift), &(f + shift), 0.46) - e).abs() < 1e-9);
            let r = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), yaw);
            prop_assert!((baseline_error(&(r * l), &(r * f), 0.46) - e).abs() < 1e-9);
        }

        #[test]
        fn relative_speed_galilean(a in v3(2.0), b in v3(2.0), c in v3(2.0)) {
            prop_assert!((relative_speed(&(a + c), &(b + c)) - relative_speed(&a, &b)).abs() < 1e-12);
        }
    }
}
