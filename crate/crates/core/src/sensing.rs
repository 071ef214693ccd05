//! Motion-capture and IMU emulation.
//!
//! Samples are taken from the ground truth at each stream's own cadence and
//! stamped with a host clock `t * (1 + drift) + offset`. Motion-capture
//! latency is a delivery delay: a sample keeps its acquisition stamp and
//! reaches the estimator `mocap_latency` seconds later.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::world::RigidState;
use crate::Vec3;

/// Slack used when deciding whether a scheduled sample falls inside a tick.
const SCHEDULE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MocapSample {
    pub position: Vec3,
    pub yaw: f64,
    /// Host-clock acquisition time.
    pub stamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// World-frame specific-force proxy, m/s^2.
    pub accel: Vec3,
    pub gyro_z: f64,
    pub stamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub mocap_rate: f64,
    pub imu_rate: f64,
    pub mocap_pos_noise: f64,
    pub mocap_yaw_noise: f64,
    pub accel_noise: f64,
    pub gyro_noise: f64,
    pub gyro_bias: f64,
    pub mocap_latency: f64,
    pub dropout_prob: f64,
    pub clock_offset: f64,
    pub clock_drift: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            mocap_rate: 120.0,
            imu_rate: 500.0,
            mocap_pos_noise: 0.0,
            mocap_yaw_noise: 0.0,
            accel_noise: 0.0,
            gyro_noise: 0.0,
            gyro_bias: 0.0,
            mocap_latency: 0.0,
            dropout_prob: 0.0,
            clock_offset: 0.0,
            clock_drift: 0.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("sensors.{m}")));
        if !(self.mocap_rate > 0.0 && self.imu_rate > 0.0) {
            return bad("mocap_rate and imu_rate must be > 0");
        }
        let noises = [
            self.mocap_pos_noise,
            self.mocap_yaw_noise,
            self.accel_noise,
            self.gyro_noise,
        ];
        if noises.iter().any(|n| !(*n >= 0.0)) {
            return bad("noise standard deviations must be >= 0");
        }
        if !(self.mocap_latency >= 0.0) {
            return bad("mocap_latency must be >= 0");
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return bad("dropout_prob must lie in [0, 1)");
        }
        if !(self.clock_drift > -1.0) || !self.clock_offset.is_finite() || !self.gyro_bias.is_finite() {
            return bad("clock_offset, clock_drift and gyro_bias must be finite, drift > -1");
        }
        Ok(())
    }
}

/// Affine host clock.
pub fn host_timestamp(t_true: f64, cfg: &SensorConfig) -> f64 {
    t_true * (1.0 + cfg.clock_drift) + cfg.clock_offset
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// One motion-capture sample of `truth`, or `None` on dropout.
///
/// The noise draws happen whether or not the sample drops, so the stream's
/// random consumption does not depend on the dropout outcome.
pub fn sample_mocap<R: Rng + ?Sized>(
    truth: &RigidState,
    cfg: &SensorConfig,
    t_true: f64,
    rng: &mut R,
) -> Option<MocapSample> {
    let drop = rng.gen::<f64>() < cfg.dropout_prob;
    let noise = Vec3::new(normal(rng), normal(rng), normal(rng)) * cfg.mocap_pos_noise;
    let yaw_noise = normal(rng) * cfg.mocap_yaw_noise;
    if drop {
        return None;
    }
    Some(MocapSample {
        position: truth.position + noise,
        yaw: wrap(truth.yaw + yaw_noise),
        stamp: host_timestamp(t_true, cfg),
    })
}

pub fn sample_imu<R: Rng + ?Sized>(
    truth: &RigidState,
    applied_accel: &Vec3,
    cfg: &SensorConfig,
    t_true: f64,
    rng: &mut R,
) -> ImuSample {
    let noise = Vec3::new(normal(rng), normal(rng), normal(rng)) * cfg.accel_noise;
    let gyro_noise = normal(rng) * cfg.gyro_noise;
    ImuSample {
        accel: applied_accel + noise,
        gyro_z: truth.yaw_rate + cfg.gyro_bias + gyro_noise,
        stamp: host_timestamp(t_true, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorEvent {
    Imu(ImuSample),
    Mocap(MocapSample),
}

/// Sensor streams of one vehicle: cadence bookkeeping, its own random
/// stream and the motion-capture delivery queue.
#[derive(Debug, Clone)]
pub struct SensorSuite {
    cfg: SensorConfig,
    rng: ChaCha8Rng,
    next_mocap: u64,
    next_imu: u64,
    in_flight: VecDeque<(f64, MocapSample)>,
}

impl SensorSuite {
    pub fn new(cfg: SensorConfig, rng: ChaCha8Rng) -> Self {
        Self {
            cfg,
            rng,
            next_mocap: 1,
            next_imu: 1,
            in_flight: VecDeque::new(),
        }
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    /// Sample used to initialise the estimator at `t = 0` (never dropped).
    pub fn initial_mocap(&mut self, truth: &RigidState) -> MocapSample {
        let cfg = SensorConfig {
            dropout_prob: 0.0,
            ..self.cfg
        };
        sample_mocap(truth, &cfg, 0.0, &mut self.rng).expect("dropout disabled")
    }

    /// Samples every stream scheduled in `(t0, t1]` and returns the events the
    /// estimator receives in that interval, ordered by true delivery time with
    /// the IMU first on ties.
    ///
    /// Truth inside the tick is the straight line from `prev` to `now`, which is
    /// the exact path of the semi-implicit Euler plant.
    pub fn tick(
        &mut self,
        t0: f64,
        t1: f64,
        prev: &RigidState,
        now: &RigidState,
        applied_accel: &Vec3,
    ) -> Vec<(f64, SensorEvent)> {
        let span = t1 - t0;
        let at = |s: f64| -> RigidState {
            let frac = ((s - t0) / span).clamp(0.0, 1.0);
            RigidState {
                position: prev.position + (now.position - prev.position) * frac,
                velocity: now.velocity,
                yaw: wrap(prev.yaw + wrap(now.yaw - prev.yaw) * frac),
                yaw_rate: now.yaw_rate,
            }
        };

        let mut events: Vec<(f64, u8, SensorEvent)> = Vec::new();

        loop {
            let s = self.next_imu as f64 / self.cfg.imu_rate;
            if s > t1 + SCHEDULE_EPS {
                break;
            }
            let imu = sample_imu(&at(s), applied_accel, &self.cfg, s, &mut self.rng);
            events.push((s, 0, SensorEvent::Imu(imu)));
            self.next_imu += 1;
        }

        loop {
            let s = self.next_mocap as f64 / self.cfg.mocap_rate;
            if s > t1 + SCHEDULE_EPS {
                break;
            }
            if let Some(m) = sample_mocap(&at(s), &self.cfg, s, &mut self.rng) {
                self.in_flight.push_back((s + self.cfg.mocap_latency, m));
            }
            self.next_mocap += 1;
        }

        while let Some(&(due, m)) = self.in_flight.front() {
            if due > t1 + SCHEDULE_EPS {
                break;
            }
            self.in_flight.pop_front();
            events.push((due, 1, SensorEvent::Mocap(m)));
        }

        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        events.into_iter().map(|(t, _, e)| (t, e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn truth() -> RigidState {
        RigidState {
            position: Vec3::new(1.0, -2.0, 0.5),
            velocity: Vec3::new(0.1, 0.0, 0.0),
            yaw: 0.7,
            yaw_rate: 0.2,
        }
    }

    #[test]
    fn identity_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SensorConfig::default();
        let m = sample_mocap(&truth(), &cfg, 3.25, &mut rng).unwrap();
        assert_eq!(m.position, truth().position);
        assert_eq!(m.yaw, truth().yaw);
        assert_eq!(m.stamp, 3.25);
        let i = sample_imu(
            &RigidState::at_rest(Vec3::zeros(), 0.0),
            &Vec3::zeros(),
            &cfg,
            1.0,
            &mut rng,
        );
        assert_eq!(i.accel, Vec3::zeros());
        assert_eq!(i.gyro_z, 0.0);
    }

    #[test]
    fn full_dropout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SensorConfig {
            dropout_prob: 1.0 - f64::EPSILON,
            ..SensorConfig::default()
        };
        assert!((0..1000).all(|_| sample_mocap(&truth(), &cfg, 0.0, &mut rng).is_none()));
    }

    #[test]
    fn gyro_bias_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SensorConfig {
            gyro_bias: 0.01,
            ..SensorConfig::default()
        };
        let i = sample_imu(&truth(), &Vec3::zeros(), &cfg, 0.0, &mut rng);
        assert_eq!(i.gyro_z, truth().yaw_rate + 0.01);
    }

    #[test]
    fn host_clock_model() {
        let mut cfg = SensorConfig::default();
        assert_eq!(host_timestamp(12.5, &cfg), 12.5);
        cfg.clock_offset = 0.002;
        assert!((host_timestamp(10.0, &cfg) - 10.002).abs() < 1e-12);
        cfg.clock_offset = 0.0;
        cfg.clock_drift = 1e-6;
        assert!((host_timestamp(100.0, &cfg) - 100.0001).abs() < 1e-12);
    }

    fn sample_std(values: &[f64], truth: f64) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let _ = truth;
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn mocap_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = SensorConfig {
            mocap_pos_noise: 0.001,
            ..SensorConfig::default()
        };
        let t = truth();
        let samples: Vec<MocapSample> = (0..100_000)
            .map(|_| sample_mocap(&t, &cfg, 0.0, &mut rng).unwrap())
            .collect();
        for axis in 0..3 {
            let v: Vec<f64> = samples.iter().map(|s| s.position[axis]).collect();
            let sd = sample_std(&v, t.position[axis]);
            assert!((sd / 0.001 - 1.0).abs() < 0.05, "axis {axis}: {sd}");
        }
    }

    #[test]
    fn gyro_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = SensorConfig {
            gyro_noise: 0.002,
            ..SensorConfig::default()
        };
        let v: Vec<f64> = (0..100_000)
            .map(|_| sample_imu(&truth(), &Vec3::zeros(), &cfg, 0.0, &mut rng).gyro_z)
            .collect();
        let sd = sample_std(&v, truth().yaw_rate);
        assert!((sd / 0.002 - 1.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn suite_cadence_latency_and_order() {
        let cfg = SensorConfig {
            mocap_latency: 0.015,
            ..SensorConfig::default()
        };
        let mut suite = SensorSuite::new(cfg, ChaCha8Rng::seed_from_u64(3));
        let s = RigidState::at_rest(Vec3::zeros(), 0.0);
        let (mut imu, mut mocap) = (vec![], vec![]);
        let mut last_t = f64::NEG_INFINITY;
        let dt = 0.01;
        for k in 0..100 {
            let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
            for (t, e) in suite.tick(t0, t1, &s, &s, &Vec3::zeros()) {
                assert!(t >= last_t);
                assert!(t > t0 - 1e-9 && t <= t1 + 1e-9);
                last_t = t;
                match e {
                    SensorEvent::Imu(i) => imu.push(i.stamp),
                    SensorEvent::Mocap(m) => {
                        assert!((t - m.stamp - 0.015).abs() < 1e-9);
                        mocap.push(m.stamp)
                    }
                }
            }
        }
        assert_eq!(imu.len(), 500);
        // 120 Hz over 1 s, minus the ones still in flight
        assert_eq!(mocap.len(), 118);
        assert!(imu.windows(2).all(|w| w[1] > w[0]));
        assert!(mocap.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn suite_is_deterministic() {
        let cfg = SensorConfig {
            mocap_pos_noise: 0.01,
            accel_noise: 0.1,
            dropout_prob: 0.2,
            ..SensorConfig::default()
        };
        let run = || {
            let mut suite = SensorSuite::new(cfg, ChaCha8Rng::seed_from_u64(99));
            let s = truth();
            (0..50)
                .flat_map(|k| suite.tick(k as f64 * 0.01, (k + 1) as f64 * 0.01, &s, &s, &Vec3::zeros()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
