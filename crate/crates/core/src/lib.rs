//! Deterministic dual-quadrotor midair docking simulator and benchmark harness.
//!
//! Two point-mass quadrotors fly a leader-follower formation and dock through a
//! passive latch. The crate is layered the same way the flight stack is:
//!
//! - [`world`]: ground-truth plant, latch contact model, OU disturbances
//! - [`sensing`]: motion-capture and IMU emulation with a host clock
//! - [`estimation`]: per-vehicle EKF over `[p, v, yaw]`
//! - [`control`]: outer-loop PID and step-response metrics
//! - [`formation`]: formation targets, cruise speed, timeout and gate errors
//! - [`supervisor`]: phase machine, safety watchdog, failure taxonomy
//! - [`tuning`]: Gaussian-process Bayesian optimization of PID gains
//! - [`bench`]: trial protocol, Monte Carlo campaigns, statistics
//! - [`cli`]: command line, config loading, logs, replay audit and reports

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod bench;
pub mod cli;
pub mod control;
pub mod error;
pub mod estimation;
pub mod formation;
pub mod sensing;
pub mod supervisor;
pub mod tuning;
pub mod world;

pub use error::{Error, Result};

/// World-frame 3-vector (x, y, z), z up.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Tool version recorded in run manifests and log headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
