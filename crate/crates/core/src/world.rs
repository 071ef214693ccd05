//! Ground-truth plant for both vehicles.
//!
//! Each vehicle is a point mass with first-order yaw, integrated with
//! semi-implicit Euler. The docking interface is a binary capture predicate
//! plus either a rigid kinematic constraint or a stiff spring-damper after
//! capture. Wind-like disturbances are per-axis Ornstein-Uhlenbeck
//! accelerations.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::angle::wrap;
use crate::control::ControlCommand;
use crate::error::{ensure_finite, ensure_finite_scalar, Error, Result};
use crate::Vec3;

/// Largest integration step the plant accepts.
pub const MAX_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    pub yaw_rate: f64,
}

impl RigidState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            yaw: wrap(yaw),
            yaw_rate: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.velocity.iter().all(|c| c.is_finite())
            && self.yaw.is_finite()
            && self.yaw_rate.is_finite()
    }

    fn check(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatchParams {
    /// Face gap below which the magnets can capture, m.
    pub engage_distance: f64,
    /// Closing speed above which contact bounces, m/s.
    pub max_latch_speed: f64,
    /// Opposing-yaw misalignment beyond which contact bounces, rad.
    pub max_latch_yaw: f64,
    /// Rigid kinematic coupling after capture; otherwise a spring-damper.
    pub hold_rigid: bool,
    /// Normal restitution applied to the relative velocity on bounce-off.
    pub restitution: f64,
    /// Face gap the pair must exceed after a bounce before capture re-arms, m.
    pub rearm_gap: f64,
    /// Compliant-latch relative stiffness, 1/s^2.
    pub stiffness: f64,
    /// Compliant-latch relative damping, 1/s.
    pub damping: f64,
}

impl Default for LatchParams {
    fn default() -> Self {
        Self {
            engage_distance: 0.002,
            max_latch_speed: 0.10,
            max_latch_yaw: 10f64.to_radians(),
            hold_rigid: true,
            restitution: 0.5,
            rearm_gap: 0.02,
            stiffness: 100.0,
            damping: 8.0,
        }
    }
}

impl LatchParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("world.latch.{m}")));
        if !(self.engage_distance > 0.0) {
            return bad("engage_distance must be > 0");
        }
        if !(self.max_latch_speed > 0.0) {
            return bad("max_latch_speed must be > 0");
        }
        if !(self.max_latch_yaw > 0.0 && self.max_latch_yaw < FRAC_PI_2) {
            return bad("max_latch_yaw must lie in (0, pi/2)");
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return bad("restitution must lie in [0, 1]");
        }
        if !(self.rearm_gap >= self.engage_distance) {
            return bad("rearm_gap must be >= engage_distance");
        }
        if !(self.stiffness > 0.0 && self.damping >= 0.0) {
            return bad("stiffness must be > 0 and damping >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuParams {
    /// Disturbance intensity, m/s^2.
    pub sigma: f64,
    /// Mean-reversion rate, 1/s.
    pub theta: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub max_accel: f64,
    pub max_speed: f64,
    pub drag_coeff: f64,
    pub max_yaw_rate: f64,
    pub latch: LatchParams,
    pub disturbance: OuParams,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            max_accel: 3.0,
            max_speed: 1.0,
            drag_coeff: 0.1,
            max_yaw_rate: 1.5,
            latch: LatchParams::default(),
            disturbance: OuParams::default(),
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("world.{m}")));
        if !(self.max_accel > 0.0) {
            return bad("max_accel must be > 0");
        }
        if !(self.max_speed > 0.0) {
            return bad("max_speed must be > 0");
        }
        if !(self.drag_coeff >= 0.0) {
            return bad("drag_coeff must be >= 0");
        }
        if !(self.max_yaw_rate > 0.0) {
            return bad("max_yaw_rate must be > 0");
        }
        if !(self.disturbance.sigma >= 0.0) {
            return bad("disturbance.sigma must be >= 0");
        }
        if !(self.disturbance.theta > 0.0) {
            return bad("disturbance.theta must be > 0");
        }
        self.latch.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactOutcome {
    NoContact,
    Latched,
    BounceOff,
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!(
            "dt must lie in (0, {MAX_DT}] s, got {dt}"
        )))
    }
}

fn clamp_axes(v: Vec3, limit: f64) -> Vec3 {
    v.map(|c| c.clamp(-limit, limit))
}

/// Advances one free-flying vehicle by `dt`.
///
/// The commanded acceleration is saturated per axis at `max_accel`, drag and
/// the disturbance are added, and the new velocity is clamped per axis at
/// `max_speed` before it moves the position.
pub fn step_vehicle(
    state: &RigidState,
    cmd: &ControlCommand,
    params: &WorldParams,
    disturbance_accel: &Vec3,
    dt: f64,
) -> Result<RigidState> {
    check_dt(dt)?;
    state.check("vehicle state")?;
    ensure_finite(&cmd.accel, "commanded acceleration")?;
    ensure_finite_scalar(cmd.yaw_rate, "commanded yaw rate")?;
    ensure_finite(disturbance_accel, "disturbance")?;

    let accel = clamp_axes(cmd.accel, params.max_accel);
    let net = accel - params.drag_coeff * state.velocity + disturbance_accel;
    let velocity = clamp_axes(state.velocity + net * dt, params.max_speed);
    let yaw_rate = cmd.yaw_rate.clamp(-params.max_yaw_rate, params.max_yaw_rate);
    Ok(RigidState {
        position: state.position + velocity * dt,
        velocity,
        yaw: wrap(state.yaw + yaw_rate * dt),
        yaw_rate,
    })
}

/// Face gap between the two docking interfaces.
pub fn face_gap(leader: &RigidState, follower: &RigidState, d_dock: f64) -> f64 {
    (follower.position - leader.position).norm() - d_dock
}

/// Classifies the instantaneous contact state of the pair.
pub fn check_contact(
    leader: &RigidState,
    follower: &RigidState,
    params: &LatchParams,
    d_dock: f64,
) -> Result<ContactOutcome> {
    leader.check("leader state")?;
    follower.check("follower state")?;
    if face_gap(leader, follower, d_dock) > params.engage_distance {
        return Ok(ContactOutcome::NoContact);
    }
    let closing = (follower.velocity - leader.velocity).norm();
    let yaw_err = wrap((follower.yaw - leader.yaw) - std::f64::consts::PI).abs();
    if closing <= params.max_latch_speed && yaw_err <= params.max_latch_yaw {
        Ok(ContactOutcome::Latched)
    } else {
        Ok(ContactOutcome::BounceOff)
    }
}

/// Coupling recorded at the capture instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatchGeometry {
    /// `p_F - p_L` at capture.
    pub offset: Vec3,
    /// `psi_F - psi_L` at capture (unwrapped difference).
    pub rel_yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum LatchState {
    /// Free flight; `armed` is false after a bounce until the pair separates.
    Free {
        armed: bool,
    },
    Latched(LatchGeometry),
}

impl LatchState {
    pub fn is_latched(&self) -> bool {
        matches!(self, LatchState::Latched(_))
    }
}

/// Advances a rigidly latched pair as one body of two equal masses.
pub fn step_latched_pair(
    leader: &RigidState,
    follower: &RigidState,
    latch: &LatchState,
    cmds: (&ControlCommand, &ControlCommand),
    disturbances: (&Vec3, &Vec3),
    params: &WorldParams,
    dt: f64,
) -> Result<(RigidState, RigidState)> {
    let geom = match latch {
        LatchState::Latched(g) => *g,
        LatchState::Free { .. } => {
            return Err(Error::Contract(
                "step_latched_pair called on an unlatched pair".into(),
            ))
        }
    };
    if !params.latch.hold_rigid {
        return Err(Error::Contract(
            "step_latched_pair requires latch.hold_rigid = true".into(),
        ));
    }
    for c in [cmds.0, cmds.1] {
        ensure_finite(&c.accel, "commanded acceleration")?;
        ensure_finite_scalar(c.yaw_rate, "commanded yaw rate")?;
    }

    let mean_cmd = ControlCommand {
        accel: 0.5
            * (clamp_axes(cmds.0.accel, params.max_accel) + clamp_axes(cmds.1.accel, params.max_accel)),
        yaw_rate: 0.5
            * (cmds.0.yaw_rate.clamp(-params.max_yaw_rate, params.max_yaw_rate)
                + cmds.1.yaw_rate.clamp(-params.max_yaw_rate, params.max_yaw_rate)),
    };
    let centre = RigidState {
        position: 0.5 * (leader.position + follower.position),
        velocity: 0.5 * (leader.velocity + follower.velocity),
        yaw: leader.yaw,
        yaw_rate: leader.yaw_rate,
    };
    let mean_dist = 0.5 * (disturbances.0 + disturbances.1);
    let next = step_vehicle(&centre, &mean_cmd, params, &mean_dist, dt)?;

    let half = 0.5 * geom.offset;
    let new_leader = RigidState {
        position: next.position - half,
        velocity: next.velocity,
        yaw: next.yaw,
        yaw_rate: next.yaw_rate,
    };
    let new_follower = RigidState {
        position: next.position + half,
        velocity: next.velocity,
        yaw: wrap(next.yaw + geom.rel_yaw),
        yaw_rate: next.yaw_rate,
    };
    Ok((new_leader, new_follower))
}

/// One Ornstein-Uhlenbeck step per axis.
pub fn sample_disturbance<R: Rng + ?Sized>(prev: &Vec3, params: &OuParams, dt: f64, rng: &mut R) -> Vec3 {
    let decay = 1.0 - params.theta * dt;
    let scale = params.sigma * dt.sqrt();
    Vec3::from_fn(|i, _| {
        let n: f64 = rng.sample(StandardNormal);
        prev[i] * decay + scale * n
    })
}

/// Reflects the closing component of the relative velocity along the
/// baseline with restitution `e`, splitting the impulse equally.
pub fn bounce(leader: &mut RigidState, follower: &mut RigidState, restitution: f64) {
    let axis = follower.position - leader.position;
    let n = match axis.try_normalize(1e-12) {
        Some(n) => n,
        None => return,
    };
    let vn = (follower.velocity - leader.velocity).dot(&n);
    if vn < 0.0 {
        let dv = -(1.0 + restitution) * vn * n;
        follower.velocity += 0.5 * dv;
        leader.velocity -= 0.5 * dv;
    }
}

/// What happened to the pair during one [`World::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Contact classification at the first engagement-range entry, if any.
    pub contact: Option<ContactOutcome>,
    /// Effective acceleration `(v' - v) / dt` of leader and follower.
    pub applied_accel: [Vec3; 2],
}

/// Both vehicles plus the latch, advanced together.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub params: WorldParams,
    pub d_dock: f64,
    pub leader: RigidState,
    pub follower: RigidState,
    pub latch: LatchState,
}

impl World {
    pub fn new(params: WorldParams, d_dock: f64, leader: RigidState, follower: RigidState) -> Self {
        Self {
            params,
            d_dock,
            leader,
            follower,
            latch: LatchState::Free { armed: true },
        }
    }

    pub fn gap(&self) -> f64 {
        face_gap(&self.leader, &self.follower, self.d_dock)
    }

    /// Advances both vehicles and resolves capture or bounce-off.
    pub fn step(
        &mut self,
        cmds: [ControlCommand; 2],
        disturbances: [Vec3; 2],
        dt: f64,
    ) -> Result<StepReport> {
        let (v_l0, v_f0) = (self.leader.velocity, self.follower.velocity);
        let mut contact = None;

        match self.latch {
            LatchState::Latched(_) if self.params.latch.hold_rigid => {
                let (l, f) = step_latched_pair(
                    &self.leader,
                    &self.follower,
                    &self.latch,
                    (&cmds[0], &cmds[1]),
                    (&disturbances[0], &disturbances[1]),
                    &self.params,
                    dt,
                )?;
                self.leader = l;
                self.follower = f;
            }
            LatchState::Latched(geom) => {
                let spring = self.spring_accel(&geom);
                self.leader = step_vehicle(
                    &self.leader,
                    &cmds[0],
                    &self.params,
                    &(disturbances[0] - 0.5 * spring),
                    dt,
                )?;
                self.follower = step_vehicle(
                    &self.follower,
                    &cmds[1],
                    &self.params,
                    &(disturbances[1] + 0.5 * spring),
                    dt,
                )?;
            }
            LatchState::Free { armed } => {
                self.leader = step_vehicle(&self.leader, &cmds[0], &self.params, &disturbances[0], dt)?;
                self.follower = step_vehicle(&self.follower, &cmds[1], &self.params, &disturbances[1], dt)?;
                let gap = self.gap();
                if armed {
                    let outcome =
                        check_contact(&self.leader, &self.follower, &self.params.latch, self.d_dock)?;
                    match outcome {
                        ContactOutcome::Latched => {
                            self.capture();
                            contact = Some(outcome);
                        }
                        ContactOutcome::BounceOff => {
                            bounce(
                                &mut self.leader,
                                &mut self.follower,
                                self.params.latch.restitution,
                            );
                            self.latch = LatchState::Free { armed: false };
                            contact = Some(outcome);
                        }
                        ContactOutcome::NoContact => {}
                    }
                } else if gap > self.params.latch.rearm_gap {
                    self.latch = LatchState::Free { armed: true };
                } else if gap <= 0.0 {
                    // faces still collide while the mechanism is disarmed
                    bounce(
                        &mut self.leader,
                        &mut self.follower,
                        self.params.latch.restitution,
                    );
                }
            }
        }

        Ok(StepReport {
            contact,
            applied_accel: [
                (self.leader.velocity - v_l0) / dt,
                (self.follower.velocity - v_f0) / dt,
            ],
        })
    }

    fn capture(&mut self) {
        let geom = LatchGeometry {
            offset: self.follower.position - self.leader.position,
            rel_yaw: self.follower.yaw - self.leader.yaw,
        };
        if self.params.latch.hold_rigid {
            // perfectly inelastic: both continue with the pair's mean velocity
            let v = 0.5 * (self.leader.velocity + self.follower.velocity);
            self.leader.velocity = v;
            self.follower.velocity = v;
            let r = 0.5 * (self.leader.yaw_rate + self.follower.yaw_rate);
            self.leader.yaw_rate = r;
            self.follower.yaw_rate = r;
        }
        self.latch = LatchState::Latched(geom);
    }

    /// Relative acceleration the compliant latch applies to the follower
    /// with respect to the leader.
    fn spring_accel(&self, geom: &LatchGeometry) -> Vec3 {
        let stretch = (self.follower.position - self.leader.position) - geom.offset;
        let rel_v = self.follower.velocity - self.leader.velocity;
        -self.params.latch.stiffness * stretch - self.params.latch.damping * rel_v
    }

    /// Applies an equal and opposite velocity change so that the follower's
    /// velocity relative to the leader changes by `dv`. Returns the velocity
    /// change of each vehicle. A rigid latch absorbs it entirely.
    pub fn apply_relative_impulse(&mut self, dv: Vec3) -> [Vec3; 2] {
        match self.latch {
            LatchState::Latched(_) if self.params.latch.hold_rigid => [Vec3::zeros(); 2],
            _ => {
                self.leader.velocity -= 0.5 * dv;
                self.follower.velocity += 0.5 * dv;
                [-0.5 * dv, 0.5 * dv]
            }
        }
    }
}
