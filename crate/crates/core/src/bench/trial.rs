//! Fixed-step closed-loop trial through every stage of the mission script.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use super::config::{Stage, TrialConfig};
use super::record::{TickRow, TrialRecord};
use crate::angle::wrap;
use crate::control::{pid_step, ControlCommand, ControllerState, PidGains};
use crate::error::{Error, Result};
use crate::estimation::{
    ekf_predict, ekf_update_mocap, nees, EkfParams, EstimatedState, UpdateOutcome, STATE_DIM,
};
use crate::formation::{
    formation_targets, mission_timeout, sync_speed, yaw_error, FormationTargets, FOLLOWER_YAW, LEADER_YAW,
};
use crate::sensing::{host_timestamp, ImuSample, SensorEvent, SensorSuite};
use crate::supervisor::{safety_check, AbortReason, Event, GuardSignals, Phase, SafetyKind, Supervisor};
use crate::world::{sample_disturbance, ContactOutcome, RigidState, World};
use crate::Vec3;

/// Simulated-time ceiling; a trial that has not finished by then is a bug.
const MAX_TRIAL_TIME: f64 = 3600.0;
/// Speed below which a scripted stage counts as settled, m/s.
const STAGE_SPEED_TOL: f64 = 0.1;
/// Yaw error below which a scripted stage counts as settled, rad.
const STAGE_YAW_TOL: f64 = 0.035;

/// Independent random stream for one consumer of a trial seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardValues {
    pub e_b: f64,
    pub e_psi: f64,
    pub v_rel: f64,
    /// Filtered leader position, used as the follower's reference.
    pub leader_p: Vec3,
}

/// First-order low-pass over the relative states that feed the gates.
///
/// Works on the 7-element estimate arrays so that a log replay reproduces the
/// online values exactly.
#[derive(Debug, Clone)]
pub struct GuardFilter {
    alpha: f64,
    d_dock: f64,
    state: Option<(Vec3, Vec3, f64, Vec3)>,
}

impl GuardFilter {
    pub fn new(cutoff_hz: f64, dt: f64, d_dock: f64) -> Self {
        Self {
            alpha: 1.0 - (-TAU * cutoff_hz * dt).exp(),
            d_dock,
            state: None,
        }
    }

    pub fn update(&mut self, est_l: &[f64; STATE_DIM], est_f: &[f64; STATE_DIM]) -> GuardValues {
        let pl = Vec3::new(est_l[0], est_l[1], est_l[2]);
        let pf = Vec3::new(est_f[0], est_f[1], est_f[2]);
        let vl = Vec3::new(est_l[3], est_l[4], est_l[5]);
        let vf = Vec3::new(est_f[3], est_f[4], est_f[5]);
        let raw = (pf - pl, vf - vl, yaw_error(est_l[6], est_f[6]), pl);
        let a = self.alpha;
        let s = match self.state {
            None => raw,
            Some((rp, rv, ey, lp)) => (
                rp + (raw.0 - rp) * a,
                rv + (raw.1 - rv) * a,
                ey + (raw.2 - ey) * a,
                lp + (raw.3 - lp) * a,
            ),
        };
        self.state = Some(s);
        GuardValues {
            e_b: s.0.norm() - self.d_dock,
            e_psi: s.2,
            v_rel: s.1.norm(),
            leader_p: s.3,
        }
    }
}

/// Straight-line setpoint ramp for both vehicles sharing one progress
/// variable, so they arrive together. Progress follows a smoothstep so the
/// setpoint starts and stops at rest; `speed` is the peak setpoint speed.
#[derive(Debug, Clone, Copy)]
struct Ramp {
    from: [Vec3; 2],
    to: [Vec3; 2],
    t0: f64,
    duration: f64,
}

impl Ramp {
    fn new(from: [Vec3; 2], to: [Vec3; 2], t0: f64, speed: f64) -> Self {
        let dist = (to[0] - from[0]).norm().max((to[1] - from[1]).norm());
        Self {
            from,
            to,
            t0,
            duration: 1.5 * dist / speed,
        }
    }

    fn at(&self, i: usize, t: f64) -> Vec3 {
        if self.duration <= 0.0 {
            return self.to[i];
        }
        let u = ((t - self.t0) / self.duration).clamp(0.0, 1.0);
        let frac = u * u * (3.0 - 2.0 * u);
        self.from[i] + (self.to[i] - self.from[i]) * frac
    }

    fn end(&self) -> f64 {
        self.t0 + self.duration
    }
}

struct Vehicle {
    name: &'static str,
    sensors: SensorSuite,
    est: EstimatedState,
    ctrl: ControllerState,
    gains: PidGains,
    wind: Vec3,
    wind_rng: ChaCha8Rng,
    last_imu: Option<ImuSample>,
}

impl Vehicle {
    fn fuse(&mut self, events: &[(f64, SensorEvent)], ekf: &EkfParams, log: &mut Vec<Event>) -> Result<()> {
        for (i, (_, ev)) in events.iter().enumerate() {
            match ev {
                SensorEvent::Imu(s) => {
                    let dt = s.stamp - self.est.stamp;
                    if dt > 0.0 {
                        self.est = ekf_predict(&self.est, s, ekf, dt)?;
                    }
                    self.last_imu = Some(*s);
                }
                SensorEvent::Mocap(z) => {
                    let dt = z.stamp - self.est.stamp;
                    if dt > 0.0 {
                        // the next inertial sample covers this interval
                        let input = events[i + 1..]
                            .iter()
                            .find_map(|(_, e)| match e {
                                SensorEvent::Imu(s) => Some(*s),
                                SensorEvent::Mocap(_) => None,
                            })
                            .or(self.last_imu);
                        if let Some(imu) = input {
                            self.est = ekf_predict(&self.est, &imu, ekf, dt)?;
                        }
                    }
                    match ekf_update_mocap(&self.est, z, ekf)? {
                        UpdateOutcome::Accepted(e) => self.est = e,
                        UpdateOutcome::Gated(d) => log.push(Event::MeasurementRejected {
                            vehicle: self.name.into(),
                            distance: d,
                        }),
                        UpdateOutcome::OutOfOrder => log.push(Event::Warning {
                            message: format!("{}: out-of-order motion-capture sample", self.name),
                        }),
                    }
                }
            }
        }
        Ok(())
    }
}

/// Docking-window bookkeeping.
struct Docking {
    t0: f64,
    t_max: f64,
    targets: FormationTargets,
    ramp: Ramp,
    standoff: f64,
    supervisor: Option<Supervisor>,
    phase: Phase,
    settle_at: Option<f64>,
    /// After a retry: hold the standoff until the faces have separated.
    backoff: bool,
}

enum Mode {
    Scripted {
        idx: usize,
        ramp: Ramp,
        yaw: [f64; 2],
    },
    Hold {
        idx: usize,
        until: f64,
        pos: [Vec3; 2],
        yaw: [f64; 2],
    },
    Docking {
        idx: usize,
        dock: Box<Docking>,
    },
    AbortHover {
        until: f64,
        pos: [Vec3; 2],
        yaw: [f64; 2],
    },
    AbortLand {
        ramp: Ramp,
        yaw: [f64; 2],
    },
    Done,
}

struct Sim<'a> {
    cfg: &'a TrialConfig,
    world: World,
    veh: [Vehicle; 2],
    filter: GuardFilter,
    guards: GuardValues,
    mode: Mode,
    /// Terminal docking phase, or a pre-docking abort.
    final_phase: Option<Phase>,
    t_max: f64,
    time_to_dock: Option<f64>,
    /// Formation centre at the end of formation entry, for the return leg.
    entry_centre: Option<Vec3>,
    targets: Option<FormationTargets>,
    rows: Vec<TickRow>,
    pending: Vec<Event>,
}

pub fn run_trial(cfg: &TrialConfig) -> Result<TrialRecord> {
    cfg.validate()?;
    Sim::new(cfg).run()
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a TrialConfig) -> Self {
        let pads = &cfg.start;
        let leader = RigidState::at_rest(pads.leader, pads.yaw_leader);
        let follower = RigidState::at_rest(pads.follower, pads.yaw_follower);
        let world = World::new(cfg.world, cfg.spec.d_dock, leader, follower);

        let make = |name, stream: u64, truth: &RigidState, gains| {
            let mut sensors = SensorSuite::new(cfg.sensors, rng_stream(cfg.seed, stream));
            let z = sensors.initial_mocap(truth);
            Vehicle {
                name,
                sensors,
                est: EstimatedState::from_mocap(&z, &cfg.ekf),
                ctrl: ControllerState::default(),
                gains,
                wind: Vec3::zeros(),
                wind_rng: rng_stream(cfg.seed, stream + 2),
                last_imu: None,
            }
        };
        let veh = [
            make("leader", 0, &leader, cfg.gains.leader),
            make("follower", 1, &follower, cfg.gains.follower),
        ];
        let mut filter = GuardFilter::new(cfg.procedure.guard_filter_hz, cfg.dt, cfg.spec.d_dock);
        let guards = filter.update(&veh[0].est.as_array(), &veh[1].est.as_array());
        Self {
            cfg,
            world,
            veh,
            filter,
            guards,
            mode: Mode::Done,
            final_phase: None,
            t_max: 0.0,
            time_to_dock: None,
            entry_centre: None,
            targets: None,
            rows: Vec::new(),
            pending: Vec::new(),
        }
    }

    fn est_pos(&self) -> [Vec3; 2] {
        [self.veh[0].est.position(), self.veh[1].est.position()]
    }

    fn run(mut self) -> Result<TrialRecord> {
        let dt = self.cfg.dt;
        self.enter_stage(0, 0.0);
        let zero = [ControlCommand::default(); 2];
        self.push_row(0.0, zero, "takeoff".into());

        let mut k: u64 = 0;
        while !matches!(self.mode, Mode::Done) {
            let t = k as f64 * dt;
            let t1 = (k + 1) as f64 * dt;
            if t1 > MAX_TRIAL_TIME {
                return Err(Error::Contract(
                    "trial exceeded the simulated-time ceiling".into(),
                ));
            }
            let stage = self.stage_name();
            let cmds = match self.tick(t, t1) {
                Ok(c) => c,
                Err(e) => {
                    // numeric trouble ends the trial as an estimator abort
                    let phase = Phase::Aborted(AbortReason::EstimatorFailure);
                    self.pending.push(Event::Warning {
                        message: e.to_string(),
                    });
                    self.pending.push(Event::Abort { phase });
                    self.final_phase = Some(phase);
                    self.mode = Mode::Done;
                    zero
                }
            };
            self.push_row(t1, cmds, stage);
            k += 1;
        }
        self.finish()
    }

    fn stage_name(&self) -> String {
        match &self.mode {
            Mode::Scripted { idx, .. } | Mode::Hold { idx, .. } | Mode::Docking { idx, .. } => {
                self.cfg.script.stages[*idx].name().into()
            }
            Mode::AbortHover { .. } => "abort_hover".into(),
            Mode::AbortLand { .. } => "land".into(),
            Mode::Done => "done".into(),
        }
    }

    fn current_phase(&self) -> Option<Phase> {
        match &self.mode {
            Mode::Docking { dock, .. } => Some(dock.phase),
            _ => self.final_phase,
        }
    }

    fn enter_stage(&mut self, idx: usize, t: f64) {
        let stages = &self.cfg.script.stages;
        if idx >= stages.len() {
            self.mode = Mode::Done;
            return;
        }
        let stage = stages[idx];
        self.pending.push(Event::StageEnter {
            stage: stage.name().into(),
        });
        let proc_ = &self.cfg.procedure;
        let pos = self.est_pos();
        let yaw_now = [self.veh[0].est.yaw(), self.veh[1].est.yaw()];
        let v_sync = sync_speed(&self.cfg.spec);
        self.mode = match stage {
            Stage::Takeoff { altitude } => {
                let to = pos.map(|p| Vec3::new(p.x, p.y, altitude));
                let yaw = [self.cfg.start.yaw_leader, self.cfg.start.yaw_follower];
                Mode::Scripted {
                    idx,
                    ramp: Ramp::new(pos, to, t, proc_.climb_speed),
                    yaw,
                }
            }
            Stage::FormationEntry => {
                let c = self.cfg.spec.g;
                self.entry_centre = Some(0.5 * (pos[0] + pos[1]));
                let half = 0.5 * (self.cfg.spec.d_dock + proc_.entry_gap);
                let to = [c - Vec3::x() * half, c + Vec3::x() * half];
                Mode::Scripted {
                    idx,
                    ramp: Ramp::new(pos, to, t, v_sync),
                    yaw: [LEADER_YAW, FOLLOWER_YAW],
                }
            }
            Stage::DockingWindow => Mode::Docking {
                idx,
                dock: Box::new(self.open_docking(t)),
            },
            Stage::Hold { duration } => {
                let held = match self.targets {
                    Some(tg) => [tg.p_l_star, tg.p_f_star],
                    None => pos,
                };
                Mode::Hold {
                    idx,
                    until: t + duration,
                    pos: held,
                    yaw: [LEADER_YAW, FOLLOWER_YAW],
                }
            }
            Stage::Return => {
                let shift = match (self.entry_centre, self.targets) {
                    (Some(c), Some(_)) => c - self.cfg.spec.g,
                    _ => Vec3::zeros(),
                };
                Mode::Scripted {
                    idx,
                    ramp: Ramp::new(pos, pos.map(|p| p + shift), t, v_sync),
                    yaw: yaw_now,
                }
            }
            Stage::Land => {
                let pads = [self.cfg.start.leader, self.cfg.start.follower];
                let to = [
                    Vec3::new(pos[0].x, pos[0].y, pads[0].z),
                    Vec3::new(pos[1].x, pos[1].y, pads[1].z),
                ];
                Mode::Scripted {
                    idx,
                    ramp: Ramp::new(pos, to, t, proc_.climb_speed),
                    yaw: yaw_now,
                }
            }
        };
    }

    fn open_docking(&mut self, t: f64) -> Docking {
        let cfg = self.cfg;
        let pos = self.est_pos();
        let t_max = mission_timeout(&cfg.spec, &pos[0], &pos[1]);
        if cfg.spec.timeout_bounds_cross() {
            self.pending.push(Event::Warning {
                message: format!(
                    "spec.t_usr = {} s is below the 30 s timeout floor; using t_usr",
                    cfg.spec.t_usr
                ),
            });
        }
        let targets = formation_targets(&cfg.spec);
        self.t_max = t_max;
        self.targets = Some(targets);
        Docking {
            t0: t,
            t_max,
            targets,
            ramp: if cfg.supervisor_enabled {
                self.approach_ramp(&targets, t)
            } else {
                // waypoint baseline: straight to the docking targets at cruise speed
                Ramp::new(
                    pos,
                    [targets.p_l_star, targets.p_f_star],
                    t,
                    sync_speed(&cfg.spec),
                )
            },
            standoff: cfg.procedure.approach_standoff,
            supervisor: cfg
                .supervisor_enabled
                .then(|| Supervisor::new(cfg.tol, cfg.supervisor, t_max)),
            phase: Phase::Approach,
            settle_at: None,
            backoff: false,
        }
    }

    /// Closing ramp from the current estimates to the approach standoff.
    fn approach_ramp(&self, targets: &FormationTargets, t: f64) -> Ramp {
        let proc_ = &self.cfg.procedure;
        let to = [
            targets.p_l_star,
            targets.p_f_star + Vec3::x() * proc_.approach_standoff,
        ];
        let speed = sync_speed(&self.cfg.spec).min(proc_.approach_speed);
        Ramp::new(self.est_pos(), to, t, speed)
    }

    fn abort(&mut self, phase: Phase, t: f64) {
        self.final_phase = Some(phase);
        let pos = self.est_pos();
        let yaw = [self.veh[0].est.yaw(), self.veh[1].est.yaw()];
        self.pending.push(Event::StageEnter {
            stage: "abort_hover".into(),
        });
        self.mode = Mode::AbortHover {
            until: t + self.cfg.procedure.abort_hover,
            pos,
            yaw,
        };
    }

    /// Setpoints for the tick starting at `t`.
    fn setpoints(&mut self, t: f64) -> ([Vec3; 2], [f64; 2]) {
        let dt = self.cfg.dt;
        let proc_ = self.cfg.procedure;
        let d = self.cfg.spec.d_dock;
        let leader_ref = self.guards.leader_p;
        let gap = self.guards.e_b;
        match &mut self.mode {
            Mode::Scripted { ramp, yaw, .. } | Mode::AbortLand { ramp, yaw } => {
                ([ramp.at(0, t), ramp.at(1, t)], *yaw)
            }
            Mode::Hold { pos, yaw, .. } | Mode::AbortHover { pos, yaw, .. } => (*pos, *yaw),
            Mode::Docking { dock, .. } => {
                let tg = dock.targets;
                let yaw = [tg.psi_l_star, tg.psi_f_star];
                if dock.supervisor.is_none() {
                    return ([dock.ramp.at(0, t), dock.ramp.at(1, t)], yaw);
                }
                let leader = dock.ramp.at(0, t);
                let follower = match dock.phase {
                    Phase::Approach => dock.ramp.at(1, t),
                    Phase::Align | Phase::Capture => {
                        let floor = if dock.phase == Phase::Align {
                            proc_.align_standoff
                        } else {
                            -proc_.capture_preload
                        };
                        if dock.backoff && gap >= 0.75 * proc_.approach_standoff {
                            dock.backoff = false;
                        }
                        if dock.backoff {
                            dock.standoff = proc_.approach_standoff;
                        } else {
                            dock.standoff = (dock.standoff - proc_.creep_speed * dt).max(floor);
                        }
                        leader_ref + Vec3::x() * (d + dock.standoff)
                    }
                    _ => tg.p_f_star,
                };
                ([leader, follower], yaw)
            }
            Mode::Done => (self.est_pos(), [0.0, 0.0]),
        }
    }

    fn tick(&mut self, t: f64, t1: f64) -> Result<[ControlCommand; 2]> {
        let cfg = self.cfg;
        let dt = cfg.dt;
        let (targets, yaws) = self.setpoints(t);

        let mut cmds = [ControlCommand::default(); 2];
        for i in 0..2 {
            let v = &mut self.veh[i];
            let (c, s) = pid_step(&v.est, &targets[i], yaws[i], &v.gains, &v.ctrl, dt)?;
            cmds[i] = c;
            v.ctrl = s;
            v.wind = sample_disturbance(&v.wind, &cfg.world.disturbance, dt, &mut v.wind_rng);
        }

        let prev = [self.world.leader, self.world.follower];
        let mut report = self.world.step(cmds, [self.veh[0].wind, self.veh[1].wind], dt)?;
        if let Some(outcome) = report.contact {
            self.pending.push(Event::Contact { outcome });
            let kick = cfg.perturbation.capture_kick;
            if outcome == ContactOutcome::Latched && kick != Vec3::zeros() {
                let dv = self.world.apply_relative_impulse(kick);
                for (a, d) in report.applied_accel.iter_mut().zip(dv) {
                    *a += d / dt;
                }
            }
        }
        let now = [self.world.leader, self.world.follower];
        for i in 0..2 {
            let events = self.veh[i]
                .sensors
                .tick(t, t1, &prev[i], &now[i], &report.applied_accel[i]);
            self.veh[i].fuse(&events, &cfg.ekf, &mut self.pending)?;
        }
        self.guards = self
            .filter
            .update(&self.veh[0].est.as_array(), &self.veh[1].est.as_array());

        let host_now = host_timestamp(t1, &cfg.sensors);
        let fault = safety_check([&self.veh[0].est, &self.veh[1].est], &cfg.safety, host_now);
        let bounced = report.contact == Some(ContactOutcome::BounceOff);
        self.advance(t1, fault, bounced)?;
        Ok(cmds)
    }

    fn converged(&self, to: &[Vec3; 2], yaw: &[f64; 2]) -> bool {
        let tol = self.cfg.procedure.stage_tolerance;
        (0..2).all(|i| {
            let e = &self.veh[i].est;
            (e.position() - to[i]).norm() < tol
                && e.velocity().norm() < STAGE_SPEED_TOL
                && wrap(e.yaw() - yaw[i]).abs() < STAGE_YAW_TOL
        })
    }

    /// Stage and phase logic at the end of a tick.
    fn advance(&mut self, t1: f64, fault: Option<AbortReason>, bounced: bool) -> Result<()> {
        let latched = self.world.latch.is_latched();
        let timeout = self.cfg.procedure.stage_timeout;
        let mode = std::mem::replace(&mut self.mode, Mode::Done);
        self.mode = match mode {
            Mode::Scripted { idx, ramp, yaw } => {
                if let (Some(f), None) = (fault, self.final_phase) {
                    self.pending.push(Event::Abort {
                        phase: Phase::Aborted(f),
                    });
                    self.abort(Phase::Aborted(f), t1);
                    return Ok(());
                }
                if t1 >= ramp.end() && self.converged(&ramp.to, &yaw) {
                    self.enter_stage(idx + 1, t1);
                    return Ok(());
                }
                if t1 > ramp.end() + timeout {
                    self.pending.push(Event::Warning {
                        message: format!(
                            "stage {} did not converge within {timeout} s",
                            self.cfg.script.stages[idx].name()
                        ),
                    });
                    self.enter_stage(idx + 1, t1);
                    return Ok(());
                }
                Mode::Scripted { idx, ramp, yaw }
            }
            Mode::Hold { idx, until, pos, yaw } => {
                if t1 >= until {
                    self.enter_stage(idx + 1, t1);
                    return Ok(());
                }
                Mode::Hold { idx, until, pos, yaw }
            }
            Mode::Docking { idx, mut dock } => {
                let t_m = t1 - dock.t0;
                let hold_elapsed = match dock.settle_at {
                    Some(s) if latched && dock.phase == Phase::Settle => t1 - s,
                    _ => 0.0,
                };
                let safety = match fault {
                    Some(AbortReason::SafetyFault(k)) => Some(k),
                    Some(_) => Some(SafetyKind::StaleEstimate),
                    None => None,
                };
                let g = GuardSignals {
                    e_b: self.guards.e_b,
                    e_psi: self.guards.e_psi,
                    v_rel: self.guards.v_rel,
                    latched,
                    t: t_m,
                    hold_elapsed,
                    bounced,
                    safety,
                };
                let before = dock.phase;
                let next = match dock.supervisor.as_mut() {
                    Some(sup) => {
                        let events = sup.step(&g)?;
                        self.pending.extend(events);
                        sup.phase()
                    }
                    None => self.unsupervised(before, &g, dock.t_max),
                };
                if before != Phase::Approach && next == Phase::Approach {
                    // back off to the standoff before the next attempt
                    dock.ramp = self.approach_ramp(&dock.targets, t1);
                    dock.backoff = true;
                }
                if before != Phase::Align && next == Phase::Align {
                    dock.standoff = self.cfg.procedure.approach_standoff;
                }
                if next == Phase::Settle && dock.settle_at.is_none() {
                    dock.settle_at = Some(t1);
                    self.time_to_dock = Some(t_m);
                }
                dock.phase = next;
                match next {
                    Phase::Success => {
                        self.final_phase = Some(next);
                        self.mode = Mode::Docking { idx, dock };
                        self.enter_stage(idx + 1, t1);
                        return Ok(());
                    }
                    Phase::Aborted(_) => {
                        self.abort(next, t1);
                        return Ok(());
                    }
                    _ => Mode::Docking { idx, dock },
                }
            }
            Mode::AbortHover { until, pos, yaw } => {
                if t1 >= until {
                    let pads = [self.cfg.start.leader, self.cfg.start.follower];
                    let to = [
                        Vec3::new(pos[0].x, pos[0].y, pads[0].z),
                        Vec3::new(pos[1].x, pos[1].y, pads[1].z),
                    ];
                    self.pending.push(Event::StageEnter { stage: "land".into() });
                    Mode::AbortLand {
                        ramp: Ramp::new(pos, to, t1, self.cfg.procedure.climb_speed),
                        yaw,
                    }
                } else {
                    Mode::AbortHover { until, pos, yaw }
                }
            }
            Mode::AbortLand { ramp, yaw } => {
                if (t1 >= ramp.end() && self.converged(&ramp.to, &yaw)) || t1 > ramp.end() + timeout {
                    Mode::Done
                } else {
                    Mode::AbortLand { ramp, yaw }
                }
            }
            Mode::Done => Mode::Done,
        };
        Ok(())
    }

    /// Phase bookkeeping for the ablation arm: no gates, only the physical
    /// latch, the hold timer and the watchdogs.
    fn unsupervised(&mut self, phase: Phase, g: &GuardSignals, t_max: f64) -> Phase {
        let next = if g.t > t_max {
            Phase::Aborted(AbortReason::Timeout)
        } else if let Some(k) = g.safety {
            Phase::Aborted(AbortReason::SafetyFault(k))
        } else {
            match phase {
                Phase::Approach if g.latched => Phase::Settle,
                Phase::Settle if g.hold_elapsed > self.cfg.tol.t_hold => Phase::Success,
                p => p,
            }
        };
        if next != phase {
            self.pending.push(Event::PhaseEnter {
                from: phase,
                to: next,
            });
            if let Phase::Aborted(_) = next {
                self.pending.push(Event::Abort { phase: next });
            }
        }
        next
    }

    fn push_row(&mut self, t: f64, cmds: [ControlCommand; 2], stage: String) {
        let (l, f) = (&self.world.leader, &self.world.follower);
        let phase = self.current_phase();
        let g = self.guards;
        let latched = self.world.latch.is_latched();
        let hold_elapsed = match &self.mode {
            Mode::Docking { dock, .. } => match dock.settle_at {
                Some(s) if latched && dock.phase == Phase::Settle => t - s,
                _ => 0.0,
            },
            _ => 0.0,
        };
        self.rows.push(TickRow {
            t,
            p_l: l.position,
            v_l: l.velocity,
            psi_l: l.yaw,
            p_f: f.position,
            v_f: f.velocity,
            psi_f: f.yaw,
            est_l: self.veh[0].est.as_array(),
            est_f: self.veh[1].est.as_array(),
            nees: [nees(&self.veh[0].est, l).ok(), nees(&self.veh[1].est, f).ok()],
            phase,
            e_b: g.e_b,
            e_psi: g.e_psi,
            v_rel: g.v_rel,
            cmd_l: cmds[0],
            cmd_f: cmds[1],
            events: std::mem::take(&mut self.pending),
            stage,
            latched,
            hold_elapsed,
            fine_gate: self.cfg.tol.fine_gate(g.e_b, g.e_psi, g.v_rel),
        });
    }

    fn finish(self) -> Result<TrialRecord> {
        let final_phase = self
            .final_phase
            .ok_or_else(|| Error::Contract("trial ended without a docking outcome".into()))?;
        let mut rec = TrialRecord {
            config_digest: self.cfg.digest(),
            seed: self.cfg.seed,
            supervisor_enabled: self.cfg.supervisor_enabled,
            dt: self.cfg.dt,
            t_max: self.t_max,
            ticks: self.rows,
            final_phase,
            outcome: crate::bench::Outcome::Success,
            time_to_dock: self.time_to_dock,
        };
        rec.outcome = rec.derive_outcome();
        Ok(rec)
    }
}
