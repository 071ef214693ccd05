//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use dockbench::angle::wrap;
use dockbench::bench::{run_ablation, run_trial, success_rate_ci, CampaignOptions, Preset, TrialConfig};
use dockbench::cli::{self, config::to_toml, log::read_log, EXIT_OK};
use dockbench::formation::{formation_targets, mission_timeout, sync_speed, FormationSpec};
use dockbench::supervisor::{
    Event, GateTolerances, GuardSignals, Phase, SafetyKind, Supervisor, SupervisorParams,
};
use dockbench::tuning::{
    bo_minimize, bo_tune, evaluate_gains, random_search, BoConfig, GainBounds, StepScenario,
};
use dockbench::Vec3;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn cli_run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("dockbench").chain(args.iter().copied()))
}

// 1 -------------------------------------------------------------------------

fn formation_geometry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let spec = FormationSpec {
            g: Vec3::new(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(0.0..20.0),
            ),
            d_dock: rng.gen_range(0.05..5.0),
            v_form_leader: rng.gen_range(0.1..3.0),
            v_form_follower: rng.gen_range(0.1..3.0),
            t_usr: rng.gen_range(1.0..500.0),
        };
        let t = formation_targets(&spec);
        let mid = 0.5 * (t.p_l_star + t.p_f_star);
        let e_mid = (mid - spec.g).amax();
        let e_sep = ((t.p_f_star - t.p_l_star).norm() - spec.d_dock).abs();
        worst = worst.max(e_mid).max(e_sep);
        ensure(e_mid <= 1e-12, format!("midpoint off by {e_mid:e} for {spec:?}"))?;
        ensure(
            e_sep <= 1e-12,
            format!("separation off by {e_sep:e} for {spec:?}"),
        )?;
        ensure(
            t.psi_l_star == 0.0 && t.psi_f_star == PI,
            format!("yaw targets ({}, {})", t.psi_l_star, t.psi_f_star),
        )?;
    }
    let el = start.elapsed();
    ensure(el < Duration::from_secs(1), format!("took {el:?}"))?;
    Ok(format!("1000 specs, worst error {worst:.1e}, {el:?}"))
}

// 2 -------------------------------------------------------------------------

fn sync_and_timeout_oracles() -> Check {
    let spec = |vl: f64, vf: f64, t_usr: f64, g: Vec3| FormationSpec {
        g,
        d_dock: 0.46,
        v_form_leader: vl,
        v_form_follower: vf,
        t_usr,
    };
    let v = sync_speed(&spec(0.3, 0.5, 120.0, Vec3::zeros()));
    ensure(v == 0.24, format!("sync_speed(0.3, 0.5) = {v}"))?;
    // centre of the pads is the origin; |g - c| = 6 m -> 25 s -> 50 s
    let (pl, pf) = (Vec3::new(-0.23, 0.0, 0.0), Vec3::new(0.23, 0.0, 0.0));
    let cases = [
        (Vec3::new(6.0, 0.0, 0.0), 120.0, 50.0, "mid-range"),
        (Vec3::new(0.6, 0.0, 0.0), 120.0, 30.0, "floor"),
        (Vec3::new(24.0, 0.0, 0.0), 120.0, 120.0, "t_usr cap"),
    ];
    for (g, t_usr, want, name) in cases {
        let got = mission_timeout(&spec(0.3, 0.5, t_usr, g), &pl, &pf);
        ensure(got == want, format!("{name}: timeout {got}, expected {want}"))?;
    }
    Ok("v_sync 0.24; timeouts 50, 30, 120 s".into())
}

// 3 -------------------------------------------------------------------------

fn random_guards(rng: &mut ChaCha8Rng, t: f64, latched: bool, hold: f64) -> GuardSignals {
    // mixtures concentrated around the gate thresholds
    let e_b = match rng.gen_range(0..4) {
        0 => rng.gen_range(-0.004..0.004),
        1 => rng.gen_range(-0.06..0.06),
        2 => rng.gen_range(-0.5..0.5),
        _ => 0.05 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
    };
    GuardSignals {
        e_b,
        e_psi: rng.gen_range(-0.2..0.2),
        v_rel: rng.gen_range(0.0..0.1),
        latched,
        t,
        hold_elapsed: hold,
        bounced: rng.gen_bool(0.02),
        safety: rng.gen_bool(0.001).then_some(SafetyKind::Geofence),
    }
}

fn supervisor_traces() -> Result<u64, String> {
    let tol = GateTolerances::default();
    let params = SupervisorParams::default();
    let t_max = 30.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0u64;
    for trace in 0..100_000u32 {
        let mut sup = Supervisor::new(tol, params, t_max);
        let (mut t, mut latched, mut hold) = (0.0, false, 0.0);
        let mut lost_since: Option<f64> = None;
        let mut retries = 0u32;
        let len = rng.gen_range(1..120);
        for _ in 0..len {
            let phase = sup.phase();
            t += rng.gen_range(0.01..0.6);
            latched = if latched {
                !rng.gen_bool(0.02)
            } else {
                rng.gen_bool(0.1)
            };
            hold = if latched && phase == Phase::Settle {
                hold + rng.gen_range(0.0..1.0)
            } else {
                0.0
            };
            let g = random_guards(&mut rng, t, latched, hold);
            steps += 1;
            if phase.is_terminal() {
                ensure(
                    sup.step(&g).is_err(),
                    format!("trace {trace}: stepping {phase} succeeded"),
                )?;
                ensure(
                    sup.phase() == phase,
                    format!("trace {trace}: left terminal {phase}"),
                )?;
                continue;
            }
            let events = sup.step(&g).map_err(|e| format!("trace {trace}: {e}"))?;
            let retried = events.iter().any(|e| matches!(e, Event::Retry { .. }));
            let mut cur = phase;
            for e in &events {
                let Event::PhaseEnter { from, to } = *e else {
                    continue;
                };
                ensure(
                    from == cur,
                    format!("trace {trace}: {from} -> {to} while in {cur}"),
                )?;
                let ok = match (from, to) {
                    (_, Phase::Aborted(_)) => g.t > t_max || g.safety.is_some(),
                    (Phase::Approach, Phase::Align) => tol.coarse_gate(g.e_b),
                    (Phase::Align, Phase::Capture) => tol.fine_gate(g.e_b, g.e_psi, g.v_rel),
                    (Phase::Capture, Phase::Settle) => g.latched,
                    (Phase::Settle, Phase::Success) => g.hold_elapsed > tol.t_hold,
                    (Phase::Align, Phase::Approach) => {
                        !tol.coarse_gate(g.e_b) && lost_since.is_some_and(|s| g.t - s >= params.debounce)
                    }
                    (Phase::Capture, Phase::Approach) => {
                        retries += 1;
                        retried && retries <= params.max_retries
                    }
                    _ => false,
                };
                ensure(ok, format!("trace {trace}: unjustified {from} -> {to} on {g:?}"))?;
                cur = to;
            }
            ensure(
                sup.phase() == cur,
                format!("trace {trace}: phase {} vs events {cur}", sup.phase()),
            )?;
            // lost-corridor clock, kept independently of the supervisor
            lost_since = match cur {
                Phase::Align if phase == Phase::Align && !tol.coarse_gate(g.e_b) => {
                    Some(lost_since.unwrap_or(g.t))
                }
                _ => None,
            };
        }
    }
    Ok(steps)
}

fn supervisor_ordering(dir: &Path) -> Check {
    let steps = supervisor_traces()?;
    // logged trials: every Capture entry satisfies the fine conjunction and
    // the offline audit accepts the log
    let noisy = to_toml(&Preset::Sim2m.config().noisy()).map_err(|e| e.to_string())?;
    let noisy_path = dir.join("noisy.toml");
    std::fs::write(&noisy_path, noisy).map_err(|e| e.to_string())?;
    let tol = GateTolerances::default();
    let mut captures = 0;
    let runs: Vec<(String, Vec<String>)> = (0..6)
        .map(|s| {
            let out = dir.join(format!("run{s}"));
            let mut a = vec!["run".to_string(), "--seed".into(), s.to_string()];
            if s > 0 {
                a.extend(["--config".into(), noisy_path.display().to_string()]);
            }
            if s == 5 {
                a.extend(["--supervisor".into(), "off".into()]);
            }
            a.extend(["--out".into(), out.display().to_string()]);
            (out.join("trial.jsonl").display().to_string(), a)
        })
        .collect();
    for (log_path, args) in runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let code = cli_run(&args);
        ensure(code == 0 || code == 2, format!("run {args:?} exited {code}"))?;
        let log = read_log(std::io::BufReader::new(
            std::fs::File::open(&log_path).map_err(|e| e.to_string())?,
        ))
        .map_err(|e| e.to_string())?;
        for row in &log.rows {
            for e in &row.events {
                if let Event::PhaseEnter {
                    to: Phase::Capture, ..
                } = e
                {
                    captures += 1;
                    ensure(
                        row.fine_gate && tol.fine_gate(row.e_b, row.e_psi, row.v_rel),
                        format!("{log_path}: Capture entered at t={} outside the fine gate", row.t),
                    )?;
                }
            }
        }
        let code = cli_run(&["replay", &log_path]);
        ensure(code == EXIT_OK, format!("replay {log_path} exited {code}"))?;
    }
    Ok(format!(
        "{steps} randomized steps in 1e5 traces; {captures} logged Capture entries, replay exit 0"
    ))
}

// 4 -------------------------------------------------------------------------

fn nominal_reproduction() -> Check {
    let cfg = Preset::Sim2m.config();
    let start = Instant::now();
    let rec = run_trial(&cfg).map_err(|e| e.to_string())?;
    let el = start.elapsed();
    ensure(rec.outcome.is_success(), format!("outcome {}", rec.outcome))?;
    let settle: Vec<_> = rec.settle_rows().collect();
    ensure(!settle.is_empty(), "empty Settle window")?;
    let (mut eb, mut epsi, mut ez) = (0.0f64, 0.0f64, 0.0f64);
    for r in settle {
        eb = eb.max(((r.p_f - r.p_l).norm() - cfg.spec.d_dock).abs());
        epsi = epsi.max(wrap(r.psi_f - r.psi_l - PI).abs());
        ez = ez.max((r.p_l.z - 2.0).abs()).max((r.p_f.z - 2.0).abs());
    }
    ensure(eb <= 0.005, format!("Settle |e_b| reached {eb}"))?;
    ensure(
        epsi <= 5f64.to_radians(),
        format!("Settle |e_psi| reached {} deg", epsi.to_degrees()),
    )?;
    ensure(ez <= 0.05, format!("altitude deviation reached {ez}"))?;
    ensure(el < Duration::from_secs(10), format!("trial took {el:?}"))?;
    Ok(format!(
        "success, max |e_b| {eb:.5} m, max |e_psi| {:.3} deg, max altitude dev {ez:.5} m, {el:?}",
        epsi.to_degrees()
    ))
}

// 5 -------------------------------------------------------------------------

/// Seconds after latch until the relative vertical speed stays below `thr`.
fn vertical_decay(cfg: &TrialConfig, thr: f64) -> Result<f64, String> {
    let rec = run_trial(cfg).map_err(|e| e.to_string())?;
    let i0 = rec
        .ticks
        .iter()
        .position(|r| r.latched)
        .ok_or_else(|| format!("never latched ({})", rec.outcome))?;
    let t0 = rec.ticks[i0].t;
    let post: Vec<_> = rec.ticks[i0..].iter().take_while(|r| r.latched).collect();
    ensure(
        post.last().unwrap().t - t0 >= 5.0,
        "latch released within 5 s of capture",
    )?;
    let last_fast = post.iter().rposition(|r| (r.v_f.z - r.v_l.z).abs() >= thr);
    Ok(last_fast.map_or(0.0, |k| post[(k + 1).min(post.len() - 1)].t - t0))
}

fn capture_transient() -> Check {
    let mut msgs = Vec::new();
    for (name, rigid) in [("rigid", true), ("compliant", false)] {
        let mut cfg = Preset::Sim2m.config();
        cfg.world.latch.hold_rigid = rigid;
        cfg.perturbation.capture_kick = Vec3::new(0.0, 0.0, 2.0);
        let t = vertical_decay(&cfg, 0.1).map_err(|e| format!("{name} latch: {e}"))?;
        ensure(
            t <= 5.0,
            format!("{name} latch: relative vertical speed above 0.1 m/s for {t} s"),
        )?;
        msgs.push(format!("{name} {t:.2} s"));
    }
    Ok(format!("2 m/s kick decays below 0.1 m/s in {}", msgs.join(", ")))
}

// 6 -------------------------------------------------------------------------

/// Upper binomial tail P(X >= k), X ~ Bin(n, 1/2), by direct summation.
fn binomial_upper_tail(k: u64, n: u64) -> f64 {
    let mut c = 1.0f64; // C(n, 0)
    let mut tail = 0.0;
    for i in 0..=n {
        if i >= k {
            tail += c;
        }
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

fn ablation() -> Check {
    let cfg = Preset::Sim2m.config().noisy();
    ensure(
        cfg.sensors.mocap_pos_noise == 0.01 && cfg.world.disturbance.sigma == 0.2,
        "noisy profile does not match the ablation conditions",
    )?;
    let start = Instant::now();
    let opts = CampaignOptions {
        parallelism: 8,
        trace_hz: 0.0,
    };
    let ab = run_ablation(&cfg, 100, 0, &opts).map_err(|e| e.to_string())?;
    let el = start.elapsed();
    let r = &ab.report;
    let oracle = binomial_upper_tail(r.on_only, r.on_only + r.off_only);
    ensure(
        (r.p_value - oracle).abs() <= 1e-12 * oracle.max(1e-300) + 1e-15,
        format!("sign test p {} vs oracle {oracle}", r.p_value),
    )?;
    ensure(
        r.on_successes > r.off_successes,
        format!("ON {} vs OFF {}", r.on_successes, r.off_successes),
    )?;
    ensure(r.p_value < 0.05, format!("sign test p = {}", r.p_value))?;
    ensure(el < Duration::from_secs(300), format!("took {el:?}"))?;
    Ok(format!(
        "100 pairs: ON {} vs OFF {} successes, discordant {}/{}, p = {:.2e}, {el:.1?}",
        r.on_successes, r.off_successes, r.on_only, r.off_only, r.p_value
    ))
}

// 7 -------------------------------------------------------------------------

fn ekf_consistency() -> Check {
    const RUNS: u64 = 50;
    const DOF: f64 = 7.0;
    const WARMUP_TICKS: usize = 100;
    let base = Preset::Sim2m.config().noisy();
    let mut run_means = Vec::new();
    for seed in 0..RUNS {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let rec = run_trial(&cfg).map_err(|e| e.to_string())?;
        let v: Vec<f64> = rec
            .ticks
            .iter()
            .skip(WARMUP_TICKS)
            .flat_map(|r| r.nees)
            .flatten()
            .collect();
        ensure(!v.is_empty(), format!("seed {seed}: no NEES samples"))?;
        run_means.push(v.iter().sum::<f64>() / v.len() as f64);
    }
    let mean = run_means.iter().sum::<f64>() / RUNS as f64;
    let chi = ChiSquared::new(DOF * RUNS as f64).map_err(|e| e.to_string())?;
    let (lo, hi) = (
        chi.inverse_cdf(0.025) / RUNS as f64,
        chi.inverse_cdf(0.975) / RUNS as f64,
    );
    ensure(
        mean >= lo && mean <= hi,
        format!("mean NEES {mean:.3} outside [{lo:.3}, {hi:.3}]"),
    )?;

    // noise-free sensing: the position estimate tracks truth after 1 s
    let rec = run_trial(&Preset::Sim2m.config()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for r in rec.ticks.iter().filter(|r| r.t >= 1.0) {
        for (est, p) in [(&r.est_l, r.p_l), (&r.est_f, r.p_f)] {
            worst = worst.max((Vec3::new(est[0], est[1], est[2]) - p).norm());
        }
    }
    ensure(
        worst < 1e-3,
        format!("noise-free position error reached {worst:e} m"),
    )?;
    Ok(format!(
        "mean NEES {mean:.3} in [{lo:.3}, {hi:.3}]; noise-free error {worst:.1e} m"
    ))
}

// 8 -------------------------------------------------------------------------

fn bo_tuning() -> Check {
    let cfg = Preset::Sim2m.config();
    let j_default = evaluate_gains(&cfg.gains.follower, &cfg, &StepScenario::default())
        .map_err(|e| e.to_string())?
        .objective;
    let res = bo_tune(&cfg, &GainBounds::default(), &BoConfig::default()).map_err(|e| e.to_string())?;
    ensure(
        res.history.windows(2).all(|w| w[1].incumbent <= w[0].incumbent),
        "tuning incumbent increased",
    )?;
    let j_tuned = evaluate_gains(&res.best_gains, &cfg, &StepScenario::default())
        .map_err(|e| e.to_string())?
        .objective;
    ensure(
        j_tuned == res.best_objective,
        format!("re-evaluated J {j_tuned} vs reported {}", res.best_objective),
    )?;
    ensure(
        j_tuned <= j_default,
        format!("J tuned {j_tuned} > J default {j_default}"),
    )?;

    let sphere = |x: &[f64]| -> dockbench::Result<f64> { Ok(x.iter().map(|v| (v - 0.5).powi(2)).sum()) };
    let (lo, hi) = ([0.0, 0.0], [1.0, 1.0]);
    let mut wins = 0;
    for rep in 0..20u64 {
        let c = BoConfig {
            budget: 30,
            n_init: 5,
            kernel_lengthscale: vec![0.3, 0.3],
            kernel_variance: 0.1,
            noise_floor: 1e-8,
            seed: rep,
            ..BoConfig::default()
        };
        let bo = bo_minimize(sphere, &lo, &hi, &c).map_err(|e| e.to_string())?;
        ensure(
            bo.incumbent.windows(2).all(|w| w[1] <= w[0]),
            format!("sphere rep {rep}: incumbent increased"),
        )?;
        let rs = random_search(sphere, &lo, &hi, 30, rep).map_err(|e| e.to_string())?;
        if bo.best().1 < rs.best().1 {
            wins += 1;
        }
    }
    ensure(wins >= 14, format!("BO beat random search in {wins}/20"))?;
    Ok(format!(
        "J default {j_default:.3} -> tuned {j_tuned:.3}; sphere wins {wins}/20"
    ))
}

// 9 -------------------------------------------------------------------------

fn wilson_oracle() -> Check {
    // hand evaluation at z = 1.96:
    // k=9:  centre 0.788990, half-width 0.193140
    // k=0:  centre = half-width = 0.138770
    let (_, lo, hi) = success_rate_ci(9, 10).map_err(|e| e.to_string())?;
    ensure(
        (lo - 0.596).abs() <= 1e-3 && (hi - 0.982).abs() <= 1e-3,
        format!("(9, 10) -> ({lo}, {hi})"),
    )?;
    let (_, lo0, hi0) = success_rate_ci(0, 10).map_err(|e| e.to_string())?;
    ensure(lo0 == 0.0, format!("(0, 10) lower bound {lo0}"))?;
    ensure((hi0 - 0.278).abs() <= 1e-3, format!("(0, 10) upper bound {hi0}"))?;
    Ok(format!(
        "(9,10) -> ({lo:.4}, {hi:.4}); (0,10) -> ({lo0}, {hi0:.4})"
    ))
}

// 10 ------------------------------------------------------------------------

fn campaign_determinism(dir: &Path) -> Check {
    let cfg_path = dir.join("noisy.toml");
    let text = to_toml(&Preset::Sim2m.config().noisy()).map_err(|e| e.to_string())?;
    std::fs::write(&cfg_path, text).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for p in ["1", "8"] {
        let out = dir.join(format!("campaign_p{p}"));
        let code = cli_run(&[
            "campaign",
            "--config",
            cfg_path.to_str().unwrap(),
            "--n",
            "24",
            "--seed",
            "100",
            "--parallelism",
            p,
            "--out",
            out.to_str().unwrap(),
        ]);
        ensure(
            code == EXIT_OK,
            format!("campaign at parallelism {p} exited {code}"),
        )?;
        bytes.push(std::fs::read(out.join("campaign.csv")).map_err(|e| e.to_string())?);
    }
    ensure(
        bytes[0] == bytes[1],
        "campaign.csv differs between parallelism 1 and 8",
    )?;
    let rows = bytes[0].iter().filter(|&&b| b == b'\n').count();
    ensure(rows == 25, format!("campaign.csv has {rows} lines"))?;
    Ok(format!("24 noisy trials, {} identical bytes", bytes[0].len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let d3 = dir.path().join("c3");
    let d10 = dir.path().join("c10");
    std::fs::create_dir_all(&d3).unwrap();
    std::fs::create_dir_all(&d10).unwrap();

    let criteria: Vec<Criterion> = vec![
        ("formation geometry", Box::new(formation_geometry)),
        (
            "sync speed and timeout oracles",
            Box::new(sync_and_timeout_oracles),
        ),
        (
            "supervisor ordering and replay audit",
            Box::new(move || supervisor_ordering(&d3)),
        ),
        ("nominal sim profile", Box::new(nominal_reproduction)),
        ("capture transient damping", Box::new(capture_transient)),
        ("supervisor ablation", Box::new(ablation)),
        ("EKF consistency", Box::new(ekf_consistency)),
        ("BO tuning", Box::new(bo_tuning)),
        ("Wilson interval oracle", Box::new(wilson_oracle)),
        (
            "campaign determinism",
            Box::new(move || campaign_determinism(&d10)),
        ),
    ];

    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let el = start.elapsed();
        match res {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{el:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {why} [{el:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
