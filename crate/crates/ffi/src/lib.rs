//! C ABI over the docking simulator.
//!
//! Configs and trial records live behind opaque handles. Every entry point
//! returns a [`DockStatus`]; on failure a message is kept per thread and can
//! be read with [`dock_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dockbench::bench::{
    consistency_metrics, run_trial, success_rate_ci, Outcome, Preset, TrialConfig, TrialRecord,
};
use dockbench::cli::config::parse_config;
use dockbench::cli::log::write_log;
use dockbench::supervisor::{FailureMode, Phase};
use dockbench::Error;

pub const DOCK_PRESET_SIM2M: u32 = 0;
pub const DOCK_PRESET_REAL0P5M: u32 = 1;

/// Phase code for ticks before the docking window opens.
pub const DOCK_PHASE_NONE: i32 = -1;
pub const DOCK_PHASE_APPROACH: i32 = 0;
pub const DOCK_PHASE_ALIGN: i32 = 1;
pub const DOCK_PHASE_CAPTURE: i32 = 2;
pub const DOCK_PHASE_SETTLE: i32 = 3;
pub const DOCK_PHASE_SUCCESS: i32 = 4;
pub const DOCK_PHASE_ABORTED: i32 = 5;

/// Bytes needed for a config digest including the terminating NUL.
pub const DOCK_DIGEST_LEN: usize = 65;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DockStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DockOutcome {
    Success = 0,
    Timeout = 1,
    Misalignment = 2,
    BounceOff = 3,
    SafetyAbort = 4,
}

impl From<Outcome> for DockOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Success => DockOutcome::Success,
            Outcome::Failure(FailureMode::Timeout) => DockOutcome::Timeout,
            Outcome::Failure(FailureMode::Misalignment) => DockOutcome::Misalignment,
            Outcome::Failure(FailureMode::BounceOff) => DockOutcome::BounceOff,
            Outcome::Failure(FailureMode::SafetyAbort) => DockOutcome::SafetyAbort,
        }
    }
}

/// Opaque trial configuration.
pub struct DockConfig(TrialConfig);

/// Opaque completed trial.
pub struct DockTrial(TrialRecord);

/// Headline results of a trial. Absent values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DockTrialSummary {
    pub seed: u64,
    pub outcome: DockOutcome,
    pub success: bool,
    pub time_to_dock: f64,
    pub baseline_rms: f64,
    pub yaw_rms: f64,
    pub n_ticks: usize,
}

/// Ground truth and guard signals of one tick.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DockTick {
    pub t: f64,
    pub p_l: [f64; 3],
    pub v_l: [f64; 3],
    pub psi_l: f64,
    pub p_f: [f64; 3],
    pub v_f: [f64; 3],
    pub psi_f: f64,
    pub phase: i32,
    pub e_b: f64,
    pub e_psi: f64,
    pub v_rel: f64,
    pub latched: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Fail(DockStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) | Error::InvalidParam(_) | Error::NonFinite(_) => DockStatus::Config,
            Error::Numeric(_) | Error::Contract(_) => DockStatus::Simulation,
            Error::Io(_) | Error::Json(_) | Error::Log(_) => DockStatus::Io,
        };
        Fail(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DockStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DockStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            DockStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DockStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DockStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn preset(code: u32) -> Result<Preset, Fail> {
    match code {
        DOCK_PRESET_SIM2M => Ok(Preset::Sim2m),
        DOCK_PRESET_REAL0P5M => Ok(Preset::Real0p5m),
        c => Err(Fail(
            DockStatus::InvalidArgument,
            format!("unknown preset code {c}"),
        )),
    }
}

fn phase_code(p: Option<Phase>) -> i32 {
    match p {
        None => DOCK_PHASE_NONE,
        Some(Phase::Approach) => DOCK_PHASE_APPROACH,
        Some(Phase::Align) => DOCK_PHASE_ALIGN,
        Some(Phase::Capture) => DOCK_PHASE_CAPTURE,
        Some(Phase::Settle) => DOCK_PHASE_SETTLE,
        Some(Phase::Success) => DOCK_PHASE_SUCCESS,
        Some(Phase::Aborted(_)) => DOCK_PHASE_ABORTED,
    }
}

unsafe fn hand_out<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    let slot = borrow_mut(out, "out")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dock_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dock_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a config from a built-in preset.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn dock_config_preset(preset_code: u32, out: *mut *mut DockConfig) -> DockStatus {
    guard(|| {
        let cfg = preset(preset_code)?.config();
        hand_out(out, DockConfig(cfg))
    })
}

/// Parses a TOML document as overrides on top of a preset.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dock_config_from_toml(
    toml: *const c_char,
    preset_code: u32,
    out: *mut *mut DockConfig,
) -> DockStatus {
    guard(|| {
        let text = utf8(toml, "toml")?;
        let cfg = parse_config(text, Path::new("<toml>"), preset(preset_code)?)?;
        hand_out(out, DockConfig(cfg))
    })
}

/// # Safety
/// `cfg` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn dock_config_free(cfg: *mut DockConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn dock_config_set_seed(cfg: *mut DockConfig, seed: u64) -> DockStatus {
    guard(|| {
        borrow_mut(cfg, "cfg")?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn dock_config_set_supervisor(cfg: *mut DockConfig, enabled: bool) -> DockStatus {
    guard(|| {
        borrow_mut(cfg, "cfg")?.0.supervisor_enabled = enabled;
        Ok(())
    })
}

/// Switches sensing, estimation and wind to the noisy campaign profile.
///
/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn dock_config_make_noisy(cfg: *mut DockConfig) -> DockStatus {
    guard(|| {
        let c = borrow_mut(cfg, "cfg")?;
        c.0 = c.0.clone().noisy();
        Ok(())
    })
}

/// Writes the hex config digest into `buf`, which needs
/// [`DOCK_DIGEST_LEN`] bytes.
///
/// # Safety
/// `cfg` must be a live handle; `buf` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dock_config_digest(
    cfg: *const DockConfig,
    buf: *mut c_char,
    len: usize,
) -> DockStatus {
    guard(|| {
        let d = borrow(cfg, "cfg")?.0.digest();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < d.len() + 1 {
            return Err(Fail(
                DockStatus::BufferTooSmall,
                format!("digest needs {} bytes, got {len}", d.len() + 1),
            ));
        }
        std::ptr::copy_nonoverlapping(d.as_ptr().cast(), buf, d.len());
        *buf.add(d.len()) = 0;
        Ok(())
    })
}

/// Runs one trial to completion. A failed docking is still `DOCK_STATUS_OK`;
/// read the outcome from the summary.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dock_trial_run(cfg: *const DockConfig, out: *mut *mut DockTrial) -> DockStatus {
    guard(|| {
        let cfg = borrow(cfg, "cfg")?;
        borrow_mut(out, "out")?;
        let rec = run_trial(&cfg.0)?;
        hand_out(out, DockTrial(rec))
    })
}

/// # Safety
/// `trial` must be a handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn dock_trial_free(trial: *mut DockTrial) {
    if !trial.is_null() {
        drop(Box::from_raw(trial));
    }
}

/// # Safety
/// `trial` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dock_trial_summary(
    trial: *const DockTrial,
    out: *mut DockTrialSummary,
) -> DockStatus {
    guard(|| {
        let rec = &borrow(trial, "trial")?.0;
        let out = borrow_mut(out, "out")?;
        let c = consistency_metrics(rec);
        *out = DockTrialSummary {
            seed: rec.seed,
            outcome: rec.outcome.into(),
            success: rec.outcome.is_success(),
            time_to_dock: rec.time_to_dock.unwrap_or(f64::NAN),
            baseline_rms: c.map_or(f64::NAN, |c| c.0),
            yaw_rms: c.map_or(f64::NAN, |c| c.1),
            n_ticks: rec.ticks.len(),
        };
        Ok(())
    })
}

/// Copies tick `index` of the trace.
///
/// # Safety
/// `trial` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dock_trial_tick(
    trial: *const DockTrial,
    index: usize,
    out: *mut DockTick,
) -> DockStatus {
    guard(|| {
        let rec = &borrow(trial, "trial")?.0;
        let out = borrow_mut(out, "out")?;
        let r = rec.ticks.get(index).ok_or_else(|| {
            Fail(
                DockStatus::InvalidArgument,
                format!("tick {index} out of range ({} ticks)", rec.ticks.len()),
            )
        })?;
        *out = DockTick {
            t: r.t,
            p_l: r.p_l.into(),
            v_l: r.v_l.into(),
            psi_l: r.psi_l,
            p_f: r.p_f.into(),
            v_f: r.v_f.into(),
            psi_f: r.psi_f,
            phase: phase_code(r.phase),
            e_b: r.e_b,
            e_psi: r.e_psi,
            v_rel: r.v_rel,
            latched: r.latched,
        };
        Ok(())
    })
}

/// Writes the JSON-lines trial log that `dockbench replay` audits.
///
/// # Safety
/// `trial` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dock_trial_write_log(trial: *const DockTrial, path: *const c_char) -> DockStatus {
    guard(|| {
        let rec = &borrow(trial, "trial")?.0;
        let path = utf8(path, "path")?;
        let f = std::fs::File::create(path).map_err(|e| Fail(DockStatus::Io, format!("{path}: {e}")))?;
        write_log(rec, std::io::BufWriter::new(f))?;
        Ok(())
    })
}

/// 95% Wilson score interval for `k` successes in `n` trials.
///
/// # Safety
/// The three output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dock_wilson_interval(
    k: u64,
    n: u64,
    estimate: *mut f64,
    lo: *mut f64,
    hi: *mut f64,
) -> DockStatus {
    guard(|| {
        let (e, l, h) = (
            borrow_mut(estimate, "estimate")?,
            borrow_mut(lo, "lo")?,
            borrow_mut(hi, "hi")?,
        );
        let (pe, pl, ph) =
            success_rate_ci(k, n).map_err(|e| Fail(DockStatus::InvalidArgument, e.to_string()))?;
        (*e, *l, *h) = (pe, pl, ph);
        Ok(())
    })
}
