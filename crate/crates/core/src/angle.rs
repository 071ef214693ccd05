//! Yaw arithmetic on the (-pi, pi] branch.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into (-pi, pi]. `pi` maps to itself and `-pi` maps to `pi`.
pub fn wrap(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
