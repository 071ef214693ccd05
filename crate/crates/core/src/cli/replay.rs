//! Offline audit of a trial log: recomputes the guards from the logged
//! estimates and checks every phase transition against the gate logic.

use serde::Serialize;

use super::log::TrialLog;
use crate::bench::{GuardFilter, TrialConfig};
use crate::estimation::STATE_DIM;
use crate::supervisor::{supervisor_step, AbortReason, Event, GuardSignals, Phase, SafetyKind};
use crate::world::ContactOutcome;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub tick: usize,
    pub t: f64,
    pub message: String,
}

fn recomputed_safety(cfg: &TrialConfig, est: [&[f64; STATE_DIM]; 2]) -> Option<SafetyKind> {
    let pos = |e: &[f64; STATE_DIM]| Vec3::new(e[0], e[1], e[2]);
    let vel = |e: &[f64; STATE_DIM]| Vec3::new(e[3], e[4], e[5]);
    if est.iter().any(|e| !cfg.safety.contains(&pos(e))) {
        Some(SafetyKind::Geofence)
    } else if est.iter().any(|e| vel(e).norm() > cfg.safety.max_speed) {
        Some(SafetyKind::Overspeed)
    } else {
        None
    }
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

struct Audit<'a> {
    cfg: &'a TrialConfig,
    enabled: bool,
    t_max: f64,
    phase: Option<Phase>,
    t0: Option<f64>,
    settle_at: Option<f64>,
    lost_since: Option<f64>,
    bounce_pending: bool,
    retries_left: u32,
    out: Vec<Violation>,
}

impl Audit<'_> {
    fn flag(&mut self, tick: usize, t: f64, message: String) {
        self.out.push(Violation { tick, t, message });
    }

    fn unsupervised(&self, from: Phase, g: &GuardSignals) -> Phase {
        if g.t > self.t_max {
            Phase::Aborted(AbortReason::Timeout)
        } else if let Some(k) = g.safety {
            Phase::Aborted(AbortReason::SafetyFault(k))
        } else {
            match from {
                Phase::Approach if g.latched => Phase::Settle,
                Phase::Settle if g.hold_elapsed > self.cfg.tol.t_hold => Phase::Success,
                p => p,
            }
        }
    }

    /// Why `from -> to` is not justified, if it is not.
    fn check(&mut self, from: Phase, to: Phase, g: &GuardSignals, events: &[Event]) -> Option<String> {
        if from.is_terminal() {
            return Some(format!("transition out of terminal phase {}", from.as_str()));
        }
        match (from, to) {
            // the watchdog depends on sample stamps that the log does not carry
            (_, Phase::Aborted(AbortReason::SafetyFault(SafetyKind::StaleEstimate))) => None,
            (_, Phase::Aborted(AbortReason::EstimatorFailure)) => {
                let warned = events.iter().any(|e| matches!(e, Event::Warning { .. }));
                (!warned).then(|| "estimator abort without a logged failure".into())
            }
            (Phase::Align, Phase::Approach) if self.enabled => {
                let since = self.lost_since.unwrap_or(g.t);
                let ok = !self.cfg.tol.coarse_gate(g.e_b) && g.t - since >= self.cfg.supervisor.debounce;
                (!ok).then(|| {
                    format!(
                        "Align -> Approach before the corridor was lost for {} s",
                        self.cfg.supervisor.debounce
                    )
                })
            }
            (Phase::Capture, Phase::Approach) if self.enabled => {
                let retry = events.iter().any(|e| matches!(e, Event::Retry { .. }));
                if !(self.bounce_pending && retry && self.retries_left > 0) {
                    return Some("Capture -> Approach without a bounce-off retry".into());
                }
                self.retries_left -= 1;
                None
            }
            _ => {
                let next = if self.enabled {
                    match supervisor_step(from, g, &self.cfg.tol, self.t_max) {
                        Ok((p, _)) => p,
                        Err(e) => return Some(e.to_string()),
                    }
                } else {
                    self.unsupervised(from, g)
                };
                (next != to).then(|| {
                    format!(
                        "{} -> {} not justified: guards give {} (e_b={}, e_psi={}, v_rel={}, latched={}, t={}, hold={})",
                        from.as_str(),
                        to.as_str(),
                        next.as_str(),
                        g.e_b,
                        g.e_psi,
                        g.v_rel,
                        g.latched,
                        g.t,
                        g.hold_elapsed
                    )
                })
            }
        }
    }
}

/// Lists every tick whose logged guards or transitions the audit cannot justify.
pub fn audit(log: &TrialLog, cfg: &TrialConfig) -> Vec<Violation> {
    let dt = log.header.dt;
    let mut filter = GuardFilter::new(cfg.procedure.guard_filter_hz, dt, cfg.spec.d_dock);
    let mut a = Audit {
        cfg,
        enabled: log.header.supervisor_enabled,
        t_max: log.header.t_max,
        phase: None,
        t0: None,
        settle_at: None,
        lost_since: None,
        bounce_pending: false,
        retries_left: cfg.supervisor.max_retries,
        out: Vec::new(),
    };

    for (i, row) in log.rows.iter().enumerate() {
        let gv = filter.update(&row.est_l, &row.est_f);
        if !(same(gv.e_b, row.e_b) && same(gv.e_psi, row.e_psi) && same(gv.v_rel, row.v_rel)) {
            a.flag(
                i,
                row.t,
                format!(
                    "logged guards (e_b={}, e_psi={}, v_rel={}) differ from recomputed ({}, {}, {})",
                    row.e_b, row.e_psi, row.v_rel, gv.e_b, gv.e_psi, gv.v_rel
                ),
            );
        }
        if row.events.iter().any(|e| {
            matches!(
                e,
                Event::Contact {
                    outcome: ContactOutcome::BounceOff
                }
            )
        }) {
            a.bounce_pending = true;
        }

        let transitions: Vec<(Phase, Phase)> = row
            .events
            .iter()
            .filter_map(|e| match e {
                Event::PhaseEnter { from, to } => Some((*from, *to)),
                _ => None,
            })
            .collect();

        if a.phase.is_none() {
            match row.phase {
                Some(Phase::Approach) if a.t0.is_none() => {
                    a.t0 = Some(row.t);
                    a.phase = Some(Phase::Approach);
                }
                Some(p @ Phase::Aborted(_)) if a.t0.is_none() => {
                    // abort before the docking window opened
                    if !row.events.iter().any(|e| matches!(e, Event::Abort { .. })) {
                        a.flag(i, row.t, format!("phase {} without a logged abort", p.as_str()));
                    }
                    a.phase = Some(p);
                    continue;
                }
                _ => {}
            }
        }

        let t_m = a.t0.map_or(0.0, |t0| row.t - t0);
        let hold = match a.settle_at {
            Some(s) if row.latched && a.phase == Some(Phase::Settle) => row.t - s,
            _ => 0.0,
        };
        let g = GuardSignals {
            e_b: gv.e_b,
            e_psi: gv.e_psi,
            v_rel: gv.v_rel,
            latched: row.latched,
            t: t_m,
            hold_elapsed: hold,
            bounced: false,
            safety: recomputed_safety(cfg, [&row.est_l, &row.est_f]),
        };

        for (from, to) in transitions {
            if a.phase != Some(from) {
                let cur = a.phase.map_or("none", |p| p.as_str());
                a.flag(
                    i,
                    row.t,
                    format!("transition from {} while in {cur}", from.as_str()),
                );
            } else if let Some(msg) = a.check(from, to, &g, &row.events) {
                a.flag(i, row.t, msg);
            }
            a.phase = Some(to);
            if to == Phase::Settle && a.settle_at.is_none() {
                a.settle_at = Some(row.t);
            }
            if to == Phase::Approach {
                a.bounce_pending = false;
            }
        }
        if row.phase.is_some() && row.phase != a.phase {
            let logged = row.phase.map_or("none", |p| p.as_str());
            let cur = a.phase.map_or("none", |p| p.as_str());
            a.flag(
                i,
                row.t,
                format!("phase {logged} logged without a transition from {cur}"),
            );
            a.phase = row.phase;
        }
        a.lost_since = match a.phase {
            Some(Phase::Align) if !cfg.tol.coarse_gate(gv.e_b) => Some(a.lost_since.unwrap_or(t_m)),
            _ => None,
        };
    }
    a.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{run_trial, TrialRecord};
    use crate::cli::log::{read_log, write_log};

    fn log_of(rec: &TrialRecord) -> TrialLog {
        let mut buf = Vec::new();
        write_log(rec, &mut buf).unwrap();
        read_log(buf.as_slice()).unwrap()
    }

    #[test]
    fn fresh_logs_pass() {
        for (noisy, on) in [(false, true), (true, true), (true, false)] {
            let mut cfg = TrialConfig::default();
            if noisy {
                cfg = cfg.noisy();
            }
            cfg.supervisor_enabled = on;
            cfg.seed = 7;
            let log = log_of(&run_trial(&cfg).unwrap());
            let v = audit(&log, &cfg);
            assert!(v.is_empty(), "{v:?}");
        }
    }

    #[test]
    fn premature_capture_is_flagged() {
        let cfg = TrialConfig::default();
        let mut log = log_of(&run_trial(&cfg).unwrap());
        let i = log
            .rows
            .iter()
            .position(|r| r.phase == Some(Phase::Align))
            .unwrap();
        // claim Capture on the very tick Align was entered
        log.rows[i].phase = Some(Phase::Capture);
        log.rows[i].events.push(Event::PhaseEnter {
            from: Phase::Align,
            to: Phase::Capture,
        });
        let v = audit(&log, &cfg);
        assert!(v.iter().any(|x| x.tick == i), "{v:?}");
    }

    #[test]
    fn edited_guard_is_flagged() {
        let cfg = TrialConfig::default();
        let mut log = log_of(&run_trial(&cfg).unwrap());
        log.rows[50].e_b += 1e-9;
        let v = audit(&log, &cfg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].tick, 50);
    }
}
