//! Per-vehicle EKF over the reduced state `[x, y, z, vx, vy, vz, yaw]`.
//!
//! Prediction is constant-velocity kinematics driven by the IMU acceleration
//! and gyro. Motion-capture position and yaw are fused with a Joseph-form
//! update; yaw innovations are wrapped and outliers beyond a Mahalanobis gate
//! are rejected.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::sensing::{ImuSample, MocapSample};
use crate::world::RigidState;
use crate::Vec3;

pub const STATE_DIM: usize = 7;
pub type StateVec = SVector<f64, STATE_DIM>;
pub type StateCov = SMatrix<f64, STATE_DIM, STATE_DIM>;
type MeasVec = SVector<f64, 4>;
type MeasMat = SMatrix<f64, 4, STATE_DIM>;

const YAW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedState {
    pub x_hat: StateVec,
    pub cov: StateCov,
    /// Host time the mean refers to.
    pub stamp: f64,
    /// Host stamp of the last accepted motion-capture update.
    pub last_update: f64,
}

impl EstimatedState {
    /// Builds an estimate from components with a small isotropic covariance.
    pub fn from_parts(p: Vec3, v: Vec3, yaw: f64, stamp: f64) -> Self {
        let mut x_hat = StateVec::zeros();
        x_hat.fixed_rows_mut::<3>(0).copy_from(&p);
        x_hat.fixed_rows_mut::<3>(3).copy_from(&v);
        x_hat[YAW] = wrap(yaw);
        Self {
            x_hat,
            cov: StateCov::identity() * 1e-2,
            stamp,
            last_update: stamp,
        }
    }

    /// Initial estimate from a first motion-capture fix, at rest.
    pub fn from_mocap(z: &MocapSample, params: &EkfParams) -> Self {
        let mut est = Self::from_parts(z.position, Vec3::zeros(), z.yaw, z.stamp);
        est.cov = StateCov::from_diagonal(&StateVec::from_row_slice(&params.p0));
        est
    }

    pub fn position(&self) -> Vec3 {
        self.x_hat.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vec3 {
        self.x_hat.fixed_rows::<3>(3).into_owned()
    }

    pub fn yaw(&self) -> f64 {
        self.x_hat[YAW]
    }

    pub fn as_array(&self) -> [f64; STATE_DIM] {
        self.x_hat.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfParams {
    /// Acceleration noise std driving velocity, m/s^2.
    pub q_accel: f64,
    /// Yaw-rate noise std, rad/s.
    pub q_yaw: f64,
    /// Motion-capture position std, m.
    pub r_pos: f64,
    /// Motion-capture yaw std, rad.
    pub r_yaw: f64,
    /// Initial covariance diagonal.
    pub p0: [f64; STATE_DIM],
    /// Innovation gate in standard deviations (Mahalanobis).
    pub gate_sigma: f64,
}

impl Default for EkfParams {
    fn default() -> Self {
        Self {
            q_accel: 0.05,
            q_yaw: 0.01,
            r_pos: 1e-4,
            r_yaw: 1e-3,
            p0: [1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4],
            gate_sigma: 5.0,
        }
    }
}

impl EkfParams {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.q_accel, self.q_yaw, self.r_pos, self.r_yaw, self.gate_sigma]
            .iter()
            .chain(&self.p0)
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam("ekf: all parameters must be > 0".into()))
        }
    }
}

fn symmetrize(p: &StateCov) -> StateCov {
    (p + p.transpose()) * 0.5
}

fn ensure_pd(p: &StateCov, stage: &str) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) && p.cholesky().is_some() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "covariance not positive-definite after {stage}"
        )))
    }
}

/// Propagates the estimate by `dt` seconds with the IMU sample as input.
pub fn ekf_predict(
    est: &EstimatedState,
    imu: &ImuSample,
    params: &EkfParams,
    dt: f64,
) -> Result<EstimatedState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("predict dt must be > 0, got {dt}")));
    }
    let a = imu.accel;
    let mut x = est.x_hat;
    for i in 0..3 {
        x[i] += x[i + 3] * dt + 0.5 * a[i] * dt * dt;
        x[i + 3] += a[i] * dt;
    }
    x[YAW] = wrap(x[YAW] + imu.gyro_z * dt);

    let mut f = StateCov::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    let qa = params.q_accel * params.q_accel;
    let mut q = StateCov::zeros();
    for i in 0..3 {
        q[(i, i)] = qa * dt.powi(4) / 4.0;
        q[(i, i + 3)] = qa * dt.powi(3) / 2.0;
        q[(i + 3, i)] = qa * dt.powi(3) / 2.0;
        q[(i + 3, i + 3)] = qa * dt * dt;
    }
    q[(YAW, YAW)] = params.q_yaw * params.q_yaw * dt * dt;

    let cov = symmetrize(&(f * est.cov * f.transpose() + q));
    ensure_pd(&cov, "predict")?;
    Ok(EstimatedState {
        x_hat: x,
        cov,
        stamp: est.stamp + dt,
        last_update: est.last_update,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
// returned by value once per fix and never stored, so the size gap is harmless
#[allow(clippy::large_enum_variant)]
pub enum UpdateOutcome {
    Accepted(EstimatedState),
    /// Innovation exceeded the gate; carries the normalised distance.
    Gated(f64),
    /// Sample older than the last accepted one.
    OutOfOrder,
}

/// Fuses one motion-capture sample.
pub fn ekf_update_mocap(est: &EstimatedState, z: &MocapSample, params: &EkfParams) -> Result<UpdateOutcome> {
    if z.stamp < est.last_update {
        return Ok(UpdateOutcome::OutOfOrder);
    }
    let mut h = MeasMat::zeros();
    for i in 0..3 {
        h[(i, i)] = 1.0;
    }
    h[(3, YAW)] = 1.0;

    let mut r = SMatrix::<f64, 4, 4>::zeros();
    for i in 0..3 {
        r[(i, i)] = params.r_pos * params.r_pos;
    }
    r[(3, 3)] = params.r_yaw * params.r_yaw;

    let pred = est.position();
    let innov = MeasVec::new(
        z.position.x - pred.x,
        z.position.y - pred.y,
        z.position.z - pred.z,
        wrap(z.yaw - est.yaw()),
    );
    let s = h * est.cov * h.transpose() + r;
    let s_chol = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("innovation covariance not positive-definite".into()))?;
    let s_inv = s_chol.inverse();
    let d2 = (innov.transpose() * s_inv * innov)[0];
    if d2.sqrt() > params.gate_sigma {
        return Ok(UpdateOutcome::Gated(d2.sqrt()));
    }

    let k = est.cov * h.transpose() * s_inv;
    let mut x = est.x_hat + k * innov;
    x[YAW] = wrap(x[YAW]);
    let i_kh = StateCov::identity() - k * h;
    let cov = symmetrize(&(i_kh * est.cov * i_kh.transpose() + k * r * k.transpose()));
    ensure_pd(&cov, "update")?;
    Ok(UpdateOutcome::Accepted(EstimatedState {
        x_hat: x,
        cov,
        stamp: est.stamp.max(z.stamp),
        last_update: z.stamp,
    }))
}

/// Estimation error `x_hat - truth` with the yaw component wrapped.
pub fn estimation_error(est: &EstimatedState, truth: &RigidState) -> StateVec {
    let mut e = est.x_hat;
    for i in 0..3 {
        e[i] -= truth.position[i];
        e[i + 3] -= truth.velocity[i];
    }
    e[YAW] = wrap(est.yaw() - truth.yaw);
    e
}

/// Normalised estimation error squared.
pub fn nees(est: &EstimatedState, truth: &RigidState) -> Result<f64> {
    let chol = est
        .cov
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance is singular".into()))?;
    let e = estimation_error(est, truth);
    let sol = chol.solve(&e);
    Ok(e.dot(&sol))
}
