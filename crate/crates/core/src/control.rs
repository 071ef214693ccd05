//! Outer-loop PID from estimated state to acceleration and yaw-rate commands.

use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::error::{ensure_finite, ensure_finite_scalar, Error, Result};
use crate::estimation::EstimatedState;
use crate::Vec3;

/// Settling band as a fraction of the step magnitude.
pub const SETTLING_BAND: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    /// m/s^2
    pub accel: Vec3,
    /// rad/s
    pub yaw_rate: f64,
}

/// Position PID gains per axis `[x, y, z]` plus a proportional yaw gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp_pos: [f64; 3],
    pub ki_pos: [f64; 3],
    pub kd_pos: [f64; 3],
    pub kp_yaw: f64,
    /// Integrator clamp, m*s.
    pub i_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self::uniform(6.0, 2.0, 4.5, 3.0)
    }
}

impl PidGains {
    /// Same position gains on all three axes.
    pub fn uniform(kp: f64, ki: f64, kd: f64, kp_yaw: f64) -> Self {
        Self {
            kp_pos: [kp; 3],
            ki_pos: [ki; 3],
            kd_pos: [kd; 3],
            kp_yaw,
            i_limit: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .kp_pos
            .iter()
            .chain(&self.ki_pos)
            .chain(&self.kd_pos)
            .chain(std::iter::once(&self.kp_yaw));
        for g in all {
            if !(g.is_finite() && *g >= 0.0) {
                return Err(Error::InvalidParam(
                    "gains must be finite and non-negative".into(),
                ));
            }
        }
        if !(self.i_limit > 0.0) {
            return Err(Error::InvalidParam("gains.i_limit must be > 0".into()));
        }
        if self.kp_pos[0] != self.kp_pos[1]
            || self.ki_pos[0] != self.ki_pos[1]
            || self.kd_pos[0] != self.kd_pos[1]
        {
            return Err(Error::InvalidParam(
                "gains: x and y position gains must be identical".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub integrator: Vec3,
    pub prev_error: Vec3,
}

/// One PID update with derivative on measurement and a clamped integrator.
pub fn pid_step(
    est: &EstimatedState,
    target_pos: &Vec3,
    target_yaw: f64,
    gains: &PidGains,
    state: &ControllerState,
    dt: f64,
) -> Result<(ControlCommand, ControllerState)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
    }
    ensure_finite(target_pos, "target position")?;
    ensure_finite_scalar(target_yaw, "target yaw")?;
    if !est.x_hat.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("estimate"));
    }

    let pos = est.position();
    let vel = est.velocity();
    let err = target_pos - pos;
    let mut integrator = state.integrator + err * dt;
    let mut accel = Vec3::zeros();
    for i in 0..3 {
        integrator[i] = integrator[i].clamp(-gains.i_limit, gains.i_limit);
        accel[i] = gains.kp_pos[i] * err[i] + gains.ki_pos[i] * integrator[i] - gains.kd_pos[i] * vel[i];
    }
    let yaw_rate = gains.kp_yaw * wrap(target_yaw - est.yaw());
    Ok((
        ControlCommand { accel, yaw_rate },
        ControllerState {
            integrator,
            prev_error: err,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Fraction of the step magnitude.
    pub overshoot: f64,
    /// Seconds until the response last re-enters the 2% band.
    pub settling_time: f64,
    /// Sum of `t * |e(t)| * dt`.
    pub itae: f64,
}

/// Step-response metrics of `trajectory`, sampled at `t = i * dt` and
/// expressed as displacement from the start towards `step`.
pub fn step_response_metrics(trajectory: &[f64], step: f64, dt: f64) -> Result<StepMetrics> {
    if trajectory.is_empty() {
        return Err(Error::InvalidParam("empty trajectory".into()));
    }
    if step == 0.0 || !step.is_finite() {
        return Err(Error::InvalidParam("step must be non-zero".into()));
    }
    let mag = step.abs();
    let band = SETTLING_BAND * mag;
    let mut peak = f64::NEG_INFINITY;
    let mut last_out: Option<usize> = None;
    let mut itae = 0.0;
    for (i, y) in trajectory.iter().enumerate() {
        // normalised so that the step direction is positive
        let along = y * step.signum();
        peak = peak.max(along);
        let e = (step - y).abs();
        if e > band {
            last_out = Some(i);
        }
        itae += (i as f64 * dt) * e * dt;
    }
    Ok(StepMetrics {
        overshoot: ((peak - mag) / mag).max(0.0),
        settling_time: last_out.map_or(0.0, |i| (i + 1) as f64 * dt),
        itae,
    })
}
