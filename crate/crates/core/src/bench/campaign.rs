//! Monte Carlo campaigns and the seed-paired supervisor ablation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::config::TrialConfig;
use super::record::{consistency_metrics, Outcome, TrialRecord};
use super::stats::{sign_test_p, success_rate_ci, TimeStats};
use super::trial::run_trial;
use crate::error::{Error, Result};
use crate::supervisor::{FailureMode, Phase};
use crate::Vec3;

/// One `campaign.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub outcome: Outcome,
    pub time_to_dock: Option<f64>,
    pub baseline_rms: Option<f64>,
    pub yaw_rms: Option<f64>,
    pub failure_mode: Option<FailureMode>,
}

impl TrialSummary {
    pub fn from_record(rec: &TrialRecord) -> Self {
        let c = consistency_metrics(rec);
        Self {
            seed: rec.seed,
            outcome: rec.outcome,
            time_to_dock: rec.time_to_dock,
            baseline_rms: c.map(|x| x.0),
            yaw_rms: c.map(|x| x.1),
            failure_mode: rec.outcome.failure_mode(),
        }
    }
}

/// Decimated trace row for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub phase: Option<Phase>,
    pub p_l: Vec3,
    pub v_l: Vec3,
    pub p_f: Vec3,
    pub v_f: Vec3,
    pub e_b: f64,
    pub e_psi: f64,
}

/// Keeps every row whose index is a multiple of `every`.
pub fn decimate(rec: &TrialRecord, every: usize) -> Vec<TraceRow> {
    rec.ticks
        .iter()
        .step_by(every.max(1))
        .map(|r| TraceRow {
            t: r.t,
            phase: r.phase,
            p_l: r.p_l,
            v_l: r.v_l,
            p_f: r.p_f,
            v_f: r.v_f,
            e_b: r.e_b,
            e_psi: r.e_psi,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub n_trials: u64,
    pub successes: u64,
    pub success_rate: SuccessRate,
    pub time_to_dock: Option<TimeStats>,
    /// RMS over trials of the per-trial Settle-window RMS.
    pub baseline_rms: Option<f64>,
    pub yaw_rms: Option<f64>,
    pub failure_histogram: BTreeMap<FailureMode, u64>,
}

fn pooled_rms(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut n, mut s) = (0usize, 0.0);
    for v in values {
        n += 1;
        s += v * v;
    }
    (n > 0).then(|| (s / n as f64).sqrt())
}

/// Aggregates per-trial rows; used both online and when re-reading a csv.
pub fn summarize(trials: &[TrialSummary]) -> Result<CampaignSummary> {
    let n = trials.len() as u64;
    let successes = trials.iter().filter(|t| t.outcome.is_success()).count() as u64;
    let (estimate, lo, hi) = success_rate_ci(successes, n)?;
    let ttd: Vec<f64> = trials
        .iter()
        .filter(|t| t.outcome.is_success())
        .filter_map(|t| t.time_to_dock)
        .collect();
    let mut failure_histogram: BTreeMap<FailureMode, u64> =
        FailureMode::ALL.iter().map(|m| (*m, 0)).collect();
    for t in trials {
        if let Some(m) = t.failure_mode {
            *failure_histogram.entry(m).or_default() += 1;
        }
    }
    Ok(CampaignSummary {
        n_trials: n,
        successes,
        success_rate: SuccessRate { estimate, lo, hi },
        time_to_dock: TimeStats::from_samples(&ttd),
        baseline_rms: pooled_rms(trials.iter().filter_map(|t| t.baseline_rms)),
        yaw_rms: pooled_rms(trials.iter().filter_map(|t| t.yaw_rms)),
        failure_histogram,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CampaignOptions {
    pub parallelism: usize,
    /// Keep a trace decimated to this many rows per second (0 keeps none).
    pub trace_hz: f64,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            trace_hz: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub summary: CampaignSummary,
    pub trials: Vec<TrialSummary>,
    /// Empty unless traces were requested; otherwise one per trial, in seed order.
    pub traces: Vec<Vec<TraceRow>>,
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Runs `n` trials with seeds `base_seed..base_seed + n`.
pub fn run_campaign(cfg: &TrialConfig, n: u64, base_seed: u64, opts: &CampaignOptions) -> Result<Campaign> {
    if n == 0 {
        return Err(Error::InvalidParam("campaign needs n >= 1".into()));
    }
    cfg.validate()?;
    let every = if opts.trace_hz > 0.0 {
        ((1.0 / opts.trace_hz) / cfg.dt).round().max(1.0) as usize
    } else {
        0
    };
    let results: Vec<(TrialSummary, Vec<TraceRow>)> = pool(opts.parallelism)?.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut c = cfg.clone();
                c.seed = base_seed + i;
                let rec = run_trial(&c)?;
                let trace = if every > 0 {
                    decimate(&rec, every)
                } else {
                    Vec::new()
                };
                Ok((TrialSummary::from_record(&rec), trace))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let (trials, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(Campaign {
        summary: summarize(&trials)?,
        trials,
        traces: if every > 0 { traces } else { Vec::new() },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub n_pairs: u64,
    pub on_successes: u64,
    pub off_successes: u64,
    /// Seeds where only the supervised arm succeeded.
    pub on_only: u64,
    /// Seeds where only the unsupervised arm succeeded.
    pub off_only: u64,
    /// One-sided exact sign test on the discordant pairs.
    pub p_value: f64,
}

pub struct Ablation {
    pub on: Campaign,
    pub off: Campaign,
    pub report: AblationReport,
}

/// Runs the same seeds with the supervisor enabled and disabled.
pub fn run_ablation(cfg: &TrialConfig, n: u64, base_seed: u64, opts: &CampaignOptions) -> Result<Ablation> {
    let mut on_cfg = cfg.clone();
    on_cfg.supervisor_enabled = true;
    let mut off_cfg = cfg.clone();
    off_cfg.supervisor_enabled = false;
    let on = run_campaign(&on_cfg, n, base_seed, opts)?;
    let off = run_campaign(&off_cfg, n, base_seed, opts)?;
    let (mut on_only, mut off_only) = (0, 0);
    for (a, b) in on.trials.iter().zip(&off.trials) {
        match (a.outcome.is_success(), b.outcome.is_success()) {
            (true, false) => on_only += 1,
            (false, true) => off_only += 1,
            _ => {}
        }
    }
    let report = AblationReport {
        n_pairs: n,
        on_successes: on.summary.successes,
        off_successes: off.summary.successes,
        on_only,
        off_only,
        p_value: sign_test_p(on_only, off_only),
    };
    Ok(Ablation { on, off, report })
}
