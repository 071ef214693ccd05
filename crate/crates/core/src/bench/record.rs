//! Per-tick trace and trial outcome.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::control::ControlCommand;
use crate::error::{Error, Result};
use crate::estimation::STATE_DIM;
use crate::supervisor::{classify_failure, Event, FailureMode, Phase};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Failure(FailureMode),
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }

    pub fn failure_mode(&self) -> Option<FailureMode> {
        match self {
            Outcome::Success => None,
            Outcome::Failure(m) => Some(*m),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure(m) => m.as_str(),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "success" {
            Ok(Outcome::Success)
        } else {
            s.parse().map(Outcome::Failure)
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of the trial log. Truth first, then estimates, supervision and
/// the commands applied during the tick that ended at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickRow {
    pub t: f64,
    pub p_l: Vec3,
    pub v_l: Vec3,
    pub psi_l: f64,
    pub p_f: Vec3,
    pub v_f: Vec3,
    pub psi_f: f64,
    pub est_l: [f64; STATE_DIM],
    pub est_f: [f64; STATE_DIM],
    /// Normalised estimation error squared of each estimate against truth;
    /// absent when the covariance cannot be inverted.
    pub nees: [Option<f64>; 2],
    /// Docking phase; absent before the docking window opens.
    pub phase: Option<Phase>,
    /// Filtered guard signals.
    pub e_b: f64,
    pub e_psi: f64,
    pub v_rel: f64,
    pub cmd_l: ControlCommand,
    pub cmd_f: ControlCommand,
    pub events: Vec<Event>,
    pub stage: String,
    pub latched: bool,
    pub hold_elapsed: f64,
    /// Fine-gate conjunction evaluated on the guards of this row.
    pub fine_gate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_digest: String,
    pub seed: u64,
    pub supervisor_enabled: bool,
    pub dt: f64,
    /// Docking timeout in mission time, s.
    pub t_max: f64,
    pub ticks: Vec<TickRow>,
    pub final_phase: Phase,
    pub outcome: Outcome,
    /// Approach entry to first Settle entry, s.
    pub time_to_dock: Option<f64>,
}

impl TrialRecord {
    pub fn final_phase(&self) -> Phase {
        self.final_phase
    }

    /// Rows inside the docking window, including the row that closed it.
    pub fn docking_rows(&self) -> impl Iterator<Item = &TickRow> {
        self.ticks.iter().filter(|r| r.stage == "docking_window")
    }

    pub fn settle_rows(&self) -> impl Iterator<Item = &TickRow> {
        self.ticks.iter().filter(|r| r.phase == Some(Phase::Settle))
    }

    /// Recomputes the outcome from the final phase and the trace.
    pub fn derive_outcome(&self) -> Outcome {
        match classify_failure(self) {
            None => Outcome::Success,
            Some(m) => Outcome::Failure(m),
        }
    }
}

/// RMS of the logged baseline and yaw errors over the Settle window.
pub fn consistency_metrics(rec: &TrialRecord) -> Option<(f64, f64)> {
    let mut n = 0usize;
    let (mut sb, mut sp) = (0.0, 0.0);
    for r in rec.settle_rows() {
        n += 1;
        sb += r.e_b * r.e_b;
        sp += r.e_psi * r.e_psi;
    }
    if n == 0 {
        None
    } else {
        Some(((sb / n as f64).sqrt(), (sp / n as f64).sqrt()))
    }
}
