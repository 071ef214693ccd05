//! Trial configuration, mission scripts and the two shipped presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

use crate::control::PidGains;
use crate::error::{Error, Result};
use crate::estimation::EkfParams;
use crate::formation::FormationSpec;
use crate::sensing::SensorConfig;
use crate::supervisor::{GateTolerances, SafetyLimits, SupervisorParams};
use crate::world::{OuParams, WorldParams, MAX_DT};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stage {
    Takeoff { altitude: f64 },
    FormationEntry,
    DockingWindow,
    Hold { duration: f64 },
    Return,
    Land,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Takeoff { .. } => "takeoff",
            Stage::FormationEntry => "formation_entry",
            Stage::DockingWindow => "docking_window",
            Stage::Hold { .. } => "hold",
            Stage::Return => "return",
            Stage::Land => "land",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionScript {
    pub stages: Vec<Stage>,
}

impl Default for MissionScript {
    fn default() -> Self {
        Self::six_phase(2.0)
    }
}

impl MissionScript {
    pub fn six_phase(altitude: f64) -> Self {
        Self {
            stages: vec![
                Stage::Takeoff { altitude },
                Stage::FormationEntry,
                Stage::DockingWindow,
                Stage::Hold { duration: 2.0 },
                Stage::Return,
                Stage::Land,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("script.stages: {m}")));
        if !matches!(self.stages.first(), Some(Stage::Takeoff { .. })) {
            return bad("first stage must be takeoff");
        }
        if !matches!(self.stages.last(), Some(Stage::Land)) {
            return bad("last stage must be land");
        }
        let windows = self
            .stages
            .iter()
            .filter(|s| matches!(s, Stage::DockingWindow))
            .count();
        if windows != 1 {
            return bad("exactly one docking_window stage is required");
        }
        for s in &self.stages {
            match *s {
                Stage::Takeoff { altitude } if !altitude.is_finite() => {
                    return bad("takeoff altitude must be finite")
                }
                Stage::Hold { duration } if !(duration >= 0.0) => return bad("hold duration must be >= 0"),
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleGains {
    pub leader: PidGains,
    pub follower: PidGains,
}

/// Take-off pads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartPads {
    pub leader: Vec3,
    pub follower: Vec3,
    pub yaw_leader: f64,
    pub yaw_follower: f64,
}

impl Default for StartPads {
    fn default() -> Self {
        Self {
            leader: Vec3::new(0.0, 0.0, 0.0),
            follower: Vec3::new(1.0, 0.0, 0.0),
            yaw_leader: 0.0,
            yaw_follower: 0.0,
        }
    }
}

/// Setpoint shaping used by the mission stages and the docking phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcedureParams {
    /// Face gap held at formation entry, m.
    pub entry_gap: f64,
    /// Peak setpoint speed of each vehicle while closing in Approach, m/s.
    pub approach_speed: f64,
    /// Face gap the follower targets during Approach, m.
    pub approach_standoff: f64,
    /// Face gap the follower creeps to during Align, m.
    pub align_standoff: f64,
    /// Interpenetration the follower creeps to during Capture, m.
    pub capture_preload: f64,
    /// Rate limit of the standoff during Align and Capture, m/s.
    pub creep_speed: f64,
    /// Cut-off of the guard low-pass filter, Hz.
    pub guard_filter_hz: f64,
    /// Take-off and landing ramp speed, m/s.
    pub climb_speed: f64,
    /// Position tolerance for a scripted stage to count as reached, m.
    pub stage_tolerance: f64,
    /// Longest time a scripted stage may wait for convergence after its ramp, s.
    pub stage_timeout: f64,
    /// Hover time after an abort before descending, s.
    pub abort_hover: f64,
}

impl Default for ProcedureParams {
    fn default() -> Self {
        Self {
            entry_gap: 0.5,
            approach_speed: 0.03,
            approach_standoff: 0.04,
            align_standoff: 0.0035,
            capture_preload: 0.01,
            creep_speed: 0.02,
            guard_filter_hz: 10.0,
            climb_speed: 0.5,
            stage_tolerance: 0.05,
            stage_timeout: 20.0,
            abort_hover: 2.0,
        }
    }
}

impl ProcedureParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("entry_gap", self.entry_gap),
            ("approach_speed", self.approach_speed),
            ("approach_standoff", self.approach_standoff),
            ("align_standoff", self.align_standoff),
            ("creep_speed", self.creep_speed),
            ("guard_filter_hz", self.guard_filter_hz),
            ("climb_speed", self.climb_speed),
            ("stage_tolerance", self.stage_tolerance),
            ("stage_timeout", self.stage_timeout),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "procedure.{name} must be > 0, got {v}"
                )));
            }
        }
        if !(self.capture_preload >= 0.0 && self.abort_hover >= 0.0) {
            return Err(Error::InvalidParam(
                "procedure.capture_preload and procedure.abort_hover must be >= 0".into(),
            ));
        }
        if self.align_standoff >= self.approach_standoff {
            return Err(Error::InvalidParam(format!(
                "procedure.align_standoff ({}) must be below procedure.approach_standoff ({})",
                self.align_standoff, self.approach_standoff
            )));
        }
        Ok(())
    }
}

/// Test hooks applied during a trial.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    /// Relative velocity (follower minus leader) injected at the latch instant, m/s.
    pub capture_kick: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub seed: u64,
    pub dt: f64,
    pub supervisor_enabled: bool,
    pub world: WorldParams,
    pub sensors: SensorConfig,
    pub ekf: EkfParams,
    pub gains: VehicleGains,
    pub spec: FormationSpec,
    pub tol: GateTolerances,
    pub supervisor: SupervisorParams,
    pub safety: SafetyLimits,
    pub procedure: ProcedureParams,
    pub start: StartPads,
    pub script: MissionScript,
    pub perturbation: Perturbation,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Preset::Sim2m.config()
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::InvalidParam(format!(
                "dt must lie in (0, {MAX_DT}], got {}",
                self.dt
            )));
        }
        self.world.validate()?;
        self.sensors.validate()?;
        self.ekf.validate()?;
        self.gains.leader.validate()?;
        self.gains.follower.validate()?;
        self.spec.validate()?;
        self.tol.validate()?;
        if !(self.supervisor.debounce >= 0.0) {
            return Err(Error::InvalidParam("supervisor.debounce must be >= 0".into()));
        }
        self.safety.validate()?;
        self.procedure.validate()?;
        self.script.validate()?;
        let pads_ok = [self.start.leader, self.start.follower]
            .iter()
            .all(|p| p.iter().all(|c| c.is_finite()))
            && self.start.yaw_leader.is_finite()
            && self.start.yaw_follower.is_finite();
        if !pads_ok {
            return Err(Error::InvalidParam("start pads must be finite".into()));
        }
        if !self.perturbation.capture_kick.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParam(
                "perturbation.capture_kick must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Noisy variant used for ablations and filter-consistency studies:
    /// 1 cm motion-capture noise and an OU wind of 0.2 m/s^2, with the filter
    /// tuned to the injected noise.
    pub fn noisy(mut self) -> Self {
        self.sensors = SensorConfig {
            mocap_pos_noise: 0.01,
            mocap_yaw_noise: 0.01,
            accel_noise: 0.05,
            gyro_noise: 0.005,
            ..self.sensors
        };
        self.world.disturbance = OuParams {
            sigma: 0.2,
            theta: 1.0,
        };
        self.ekf = EkfParams {
            q_accel: 0.05,
            q_yaw: 0.005,
            r_pos: 0.01,
            r_yaw: 0.01,
            p0: [1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4],
            gate_sigma: 5.0,
        };
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "sim2m")]
    Sim2m,
    #[serde(rename = "real0p5m")]
    Real0p5m,
}

impl Preset {
    pub fn config(self) -> TrialConfig {
        match self {
            Preset::Sim2m => TrialConfig {
                seed: 0,
                dt: 0.01,
                supervisor_enabled: true,
                world: WorldParams::default(),
                sensors: SensorConfig::default(),
                ekf: EkfParams::default(),
                gains: VehicleGains::default(),
                spec: FormationSpec::default(),
                tol: GateTolerances::default(),
                supervisor: SupervisorParams::default(),
                safety: SafetyLimits::default(),
                procedure: ProcedureParams::default(),
                start: StartPads::default(),
                script: MissionScript::six_phase(2.0),
                perturbation: Perturbation::default(),
            },
            Preset::Real0p5m => {
                let mut cfg = Preset::Sim2m.config();
                cfg.spec.g = Vec3::new(1.5, 0.8, 0.5);
                cfg.script = MissionScript::six_phase(0.5);
                cfg.sensors = SensorConfig {
                    mocap_pos_noise: 0.001,
                    mocap_yaw_noise: 0.005,
                    accel_noise: 0.05,
                    gyro_noise: 0.005,
                    mocap_latency: 0.005,
                    dropout_prob: 0.01,
                    ..SensorConfig::default()
                };
                cfg.ekf = EkfParams {
                    r_pos: 0.001,
                    r_yaw: 0.005,
                    q_accel: 0.05,
                    q_yaw: 0.005,
                    ..EkfParams::default()
                };
                cfg.world.disturbance = OuParams {
                    sigma: 0.05,
                    theta: 1.0,
                };
                cfg
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Sim2m => "sim2m",
            Preset::Real0p5m => "real0p5m",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim2m" => Ok(Preset::Sim2m),
            "real0p5m" => Ok(Preset::Real0p5m),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected sim2m or real0p5m)"
            ))),
        }
    }
}
