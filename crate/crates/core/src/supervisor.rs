//! Progress-aware docking supervisor.
//!
//! Phases advance `Approach -> Align -> Capture -> Settle -> Success` only when
//! the measurable guards hold. Any phase aborts on timeout or a safety fault.
//! Two back-edges exist: `Align -> Approach` after the coarse corridor has been
//! lost for a debounce window, and `Capture -> Approach` after a bounce-off
//! while retries remain.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::bench::TrialRecord;
use crate::error::{Error, Result};
use crate::estimation::EstimatedState;
use crate::world::ContactOutcome;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyKind {
    Geofence,
    Overspeed,
    StaleEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbortReason {
    Timeout,
    SafetyFault(SafetyKind),
    EstimatorFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Approach,
    Align,
    Capture,
    Settle,
    Success,
    Aborted(AbortReason),
}

impl Phase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Phase::Success | Phase::Aborted(_))
    }

    /// Position in the canonical order; terminal phases rank last.
    pub fn rank(&self) -> u8 {
        match self {
            Phase::Approach => 0,
            Phase::Align => 1,
            Phase::Capture => 2,
            Phase::Settle => 3,
            Phase::Success | Phase::Aborted(_) => 4,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::Align => "align",
            Phase::Capture => "capture",
            Phase::Settle => "settle",
            Phase::Success => "success",
            Phase::Aborted(AbortReason::Timeout) => "aborted_timeout",
            Phase::Aborted(AbortReason::EstimatorFailure) => "aborted_estimator",
            Phase::Aborted(AbortReason::SafetyFault(SafetyKind::Geofence)) => "aborted_geofence",
            Phase::Aborted(AbortReason::SafetyFault(SafetyKind::Overspeed)) => "aborted_overspeed",
            Phase::Aborted(AbortReason::SafetyFault(SafetyKind::StaleEstimate)) => "aborted_stale_estimate",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use AbortReason::*;
        Ok(match s {
            "approach" => Phase::Approach,
            "align" => Phase::Align,
            "capture" => Phase::Capture,
            "settle" => Phase::Settle,
            "success" => Phase::Success,
            "aborted_timeout" => Phase::Aborted(Timeout),
            "aborted_estimator" => Phase::Aborted(EstimatorFailure),
            "aborted_geofence" => Phase::Aborted(SafetyFault(SafetyKind::Geofence)),
            "aborted_overspeed" => Phase::Aborted(SafetyFault(SafetyKind::Overspeed)),
            "aborted_stale_estimate" => Phase::Aborted(SafetyFault(SafetyKind::StaleEstimate)),
            other => return Err(Error::Log(format!("unknown phase '{other}'"))),
        })
    }
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateTolerances {
    pub eps_b_coarse: f64,
    pub eps_b_fine: f64,
    pub eps_psi: f64,
    pub eps_v: f64,
    pub t_hold: f64,
}

impl Default for GateTolerances {
    fn default() -> Self {
        Self {
            eps_b_coarse: 0.05,
            eps_b_fine: 0.005,
            eps_psi: 5f64.to_radians(),
            eps_v: 0.05,
            t_hold: 3.0,
        }
    }
}

impl GateTolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("eps_b_coarse", self.eps_b_coarse),
            ("eps_b_fine", self.eps_b_fine),
            ("eps_psi", self.eps_psi),
            ("eps_v", self.eps_v),
            ("t_hold", self.t_hold),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(format!("tol.{name} must be > 0, got {v}")));
            }
        }
        if self.eps_b_fine > self.eps_b_coarse {
            return Err(Error::InvalidParam(format!(
                "tol.eps_b_fine ({}) must not exceed tol.eps_b_coarse ({})",
                self.eps_b_fine, self.eps_b_coarse
            )));
        }
        Ok(())
    }

    /// Coarse corridor: `|e_b| < eps_b_coarse`.
    pub fn coarse_gate(&self, e_b: f64) -> bool {
        e_b.abs() < self.eps_b_coarse
    }

    /// Fine conjunction on baseline, yaw and relative speed.
    pub fn fine_gate(&self, e_b: f64, e_psi: f64, v_rel: f64) -> bool {
        e_b.abs() < self.eps_b_fine && e_psi.abs() < self.eps_psi && v_rel < self.eps_v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisorParams {
    /// Time the coarse corridor must stay lost before Align falls back, s.
    pub debounce: f64,
    /// Automatic Capture -> Approach retries after a bounce-off.
    pub max_retries: u32,
}

impl Default for SupervisorParams {
    fn default() -> Self {
        Self {
            debounce: 0.2,
            max_retries: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardSignals {
    pub e_b: f64,
    pub e_psi: f64,
    pub v_rel: f64,
    pub latched: bool,
    /// Mission clock since Approach entry, s.
    pub t: f64,
    pub hold_elapsed: f64,
    /// A bounce-off contact happened this tick.
    #[serde(default)]
    pub bounced: bool,
    #[serde(default)]
    pub safety: Option<SafetyKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    PhaseEnter { from: Phase, to: Phase },
    GateEval { gate: String, passed: bool },
    Contact { outcome: ContactOutcome },
    Abort { phase: Phase },
    Retry { remaining: u32 },
    StageEnter { stage: String },
    MeasurementRejected { vehicle: String, distance: f64 },
    Warning { message: String },
}

/// Forward transition for one tick, without debounce or retry memory.
pub fn supervisor_step(
    phase: Phase,
    guards: &GuardSignals,
    tol: &GateTolerances,
    t_max: f64,
) -> Result<(Phase, Vec<Event>)> {
    if phase.is_terminal() {
        return Err(Error::Contract(format!(
            "supervisor stepped in terminal phase {phase}"
        )));
    }
    let next = if guards.t > t_max {
        Phase::Aborted(AbortReason::Timeout)
    } else if let Some(kind) = guards.safety {
        Phase::Aborted(AbortReason::SafetyFault(kind))
    } else {
        match phase {
            Phase::Approach if tol.coarse_gate(guards.e_b) => Phase::Align,
            Phase::Align if tol.fine_gate(guards.e_b, guards.e_psi, guards.v_rel) => Phase::Capture,
            Phase::Capture if guards.latched => Phase::Settle,
            Phase::Settle if guards.hold_elapsed > tol.t_hold => Phase::Success,
            p => p,
        }
    };
    let mut events = Vec::new();
    if next != phase {
        match (phase, next) {
            (Phase::Approach, Phase::Align) => events.push(Event::GateEval {
                gate: "coarse".into(),
                passed: true,
            }),
            (Phase::Align, Phase::Capture) => events.push(Event::GateEval {
                gate: "fine".into(),
                passed: true,
            }),
            _ => {}
        }
        events.push(Event::PhaseEnter {
            from: phase,
            to: next,
        });
        if let Phase::Aborted(_) = next {
            events.push(Event::Abort { phase: next });
        }
    }
    Ok((next, events))
}

/// Stateful supervisor: forward edges from [`supervisor_step`] plus the
/// debounced Align regression and bounded bounce-off retries.
#[derive(Debug, Clone)]
pub struct Supervisor {
    phase: Phase,
    tol: GateTolerances,
    params: SupervisorParams,
    t_max: f64,
    retries_left: u32,
    lost_since: Option<f64>,
    /// Bounce seen since the last Approach entry, not yet acted on.
    bounce_pending: bool,
}

impl Supervisor {
    pub fn new(tol: GateTolerances, params: SupervisorParams, t_max: f64) -> Self {
        Self {
            phase: Phase::Approach,
            tol,
            params,
            t_max,
            retries_left: params.max_retries,
            lost_since: None,
            bounce_pending: false,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn step(&mut self, g: &GuardSignals) -> Result<Vec<Event>> {
        let (mut next, mut events) = supervisor_step(self.phase, g, &self.tol, self.t_max)?;
        self.bounce_pending |= g.bounced;

        if next == self.phase && self.phase == Phase::Align && !self.tol.coarse_gate(g.e_b) {
            let since = *self.lost_since.get_or_insert(g.t);
            if g.t - since >= self.params.debounce {
                next = Phase::Approach;
                events.push(Event::PhaseEnter {
                    from: self.phase,
                    to: next,
                });
            }
        }
        // a bounce in the same tick as the fine gate is handled once in Capture
        if next == Phase::Capture && self.bounce_pending && self.retries_left > 0 {
            self.retries_left -= 1;
            events.push(Event::Retry {
                remaining: self.retries_left,
            });
            events.push(Event::PhaseEnter {
                from: Phase::Capture,
                to: Phase::Approach,
            });
            next = Phase::Approach;
        }
        if next == Phase::Approach {
            self.bounce_pending = false;
        }
        if next != Phase::Align || self.tol.coarse_gate(g.e_b) {
            self.lost_since = None;
        }
        self.phase = next;
        Ok(events)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyLimits {
    pub geofence_min: Vec3,
    pub geofence_max: Vec3,
    /// Estimated speed above which the trial aborts, m/s.
    pub max_speed: f64,
    /// Longest allowed gap since the last accepted fix, s.
    pub watchdog_window: f64,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        Self {
            geofence_min: Vec3::new(-3.0, -3.0, -0.5),
            geofence_max: Vec3::new(3.0, 3.0, 3.5),
            max_speed: 2.0,
            watchdog_window: 0.5,
        }
    }
}

impl SafetyLimits {
    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|i| !(self.geofence_min[i] < self.geofence_max[i])) {
            return Err(Error::InvalidParam(
                "safety.geofence_min must be below safety.geofence_max on every axis".into(),
            ));
        }
        if !(self.max_speed > 0.0 && self.watchdog_window > 0.0) {
            return Err(Error::InvalidParam(
                "safety.max_speed and safety.watchdog_window must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.geofence_min[i] && p[i] <= self.geofence_max[i])
    }
}

/// Watchdog over both estimates at host time `now`.
pub fn safety_check(states: [&EstimatedState; 2], limits: &SafetyLimits, now: f64) -> Option<AbortReason> {
    for s in states {
        if !limits.contains(&s.position()) {
            return Some(AbortReason::SafetyFault(SafetyKind::Geofence));
        }
    }
    for s in states {
        if s.velocity().norm() > limits.max_speed {
            return Some(AbortReason::SafetyFault(SafetyKind::Overspeed));
        }
    }
    for s in states {
        if now - s.last_update > limits.watchdog_window {
            return Some(AbortReason::SafetyFault(SafetyKind::StaleEstimate));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    Timeout,
    Misalignment,
    BounceOff,
    SafetyAbort,
}

impl FailureMode {
    pub const ALL: [FailureMode; 4] = [
        FailureMode::Timeout,
        FailureMode::Misalignment,
        FailureMode::BounceOff,
        FailureMode::SafetyAbort,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FailureMode::Timeout => "timeout",
            FailureMode::Misalignment => "misalignment",
            FailureMode::BounceOff => "bounce_off",
            FailureMode::SafetyAbort => "safety_abort",
        }
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FailureMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Log(format!("unknown failure mode '{s}'")))
    }
}

/// Failure taxonomy of a finished trial; `None` for a success.
pub fn classify_failure(trace: &TrialRecord) -> Option<FailureMode> {
    match trace.final_phase() {
        Phase::Success => None,
        Phase::Aborted(AbortReason::SafetyFault(_) | AbortReason::EstimatorFailure) => {
            Some(FailureMode::SafetyAbort)
        }
        _ => {
            let contact = trace
                .docking_rows()
                .any(|r| r.events.iter().any(|e| matches!(e, Event::Contact { .. })));
            if contact {
                Some(FailureMode::BounceOff)
            } else if !trace.docking_rows().any(|r| r.fine_gate) {
                Some(FailureMode::Misalignment)
            } else {
                Some(FailureMode::Timeout)
            }
        }
    }
}
