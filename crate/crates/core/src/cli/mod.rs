//! `dockbench` command-line interface.
//!
//! Exit codes: 0 success, 1 tool error, 2 trial failure, 3 audit violation.
//! Outputs default to subdirectories of `$DOCKBENCH_OUT` (or `dockbench-out`).

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub mod config;
pub mod log;
pub mod replay;
pub mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::bench::{
    consistency_metrics, run_ablation, run_campaign, run_trial, Campaign, CampaignOptions, Preset, TraceRow,
    TrialConfig,
};
use crate::error::{Error, Result};
use crate::tuning::{bo_tune, evaluate_gains, BoConfig, GainBounds, StepScenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOOL_ERROR: i32 = 1;
pub const EXIT_TRIAL_FAILURE: i32 = 2;
pub const EXIT_AUDIT_VIOLATION: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Sim2m,
    Real0p5m,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Sim2m => Preset::Sim2m,
            PresetArg::Real0p5m => Preset::Real0p5m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(
    name = "dockbench",
    version,
    about = "Midair docking simulator and benchmark harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML document merged over the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sim2m")]
    pub preset: PresetArg,
    /// Overrides `supervisor_enabled`.
    #[arg(long, value_enum)]
    pub supervisor: Option<Switch>,
}

impl ConfigArgs {
    fn load(&self) -> Result<TrialConfig> {
        let mut cfg = config::load_config(self.config.as_deref(), self.preset.into())?;
        if let Some(s) = self.supervisor {
            cfg.supervisor_enabled = s == Switch::On;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial and write its log, summary and manifest.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeds `seed..seed+n` and write per-trial rows and a summary.
    Campaign {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 100)]
        n: u64,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Rate of the per-trial plotting traces, Hz (0 disables them).
        #[arg(long, default_value_t = 10.0)]
        trace_hz: f64,
        /// Run the same seeds with the supervisor on and off.
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune the follower gains with Bayesian optimisation.
    Tune {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Optimiser seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 8)]
        n_init: usize,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        /// Output JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a trial log against the gate logic.
    Replay {
        log: PathBuf,
        /// Config of the run; defaults to `config.toml` next to the log.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Markdown report and plot data from a campaign directory.
    Report {
        campaign_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    /// Wall-clock bounds, seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub outputs: Vec<String>,
}

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DOCKBENCH_OUT";

fn out_or(out: Option<PathBuf>, leaf: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("dockbench-out"))
            .join(leaf)
    })
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Flat trace row for plotting tools.
#[derive(Debug, Serialize, Deserialize)]
pub struct TraceCsvRow {
    pub t: f64,
    pub phase: String,
    pub p_l_x: f64,
    pub p_l_y: f64,
    pub p_l_z: f64,
    pub v_l_x: f64,
    pub v_l_y: f64,
    pub v_l_z: f64,
    pub p_f_x: f64,
    pub p_f_y: f64,
    pub p_f_z: f64,
    pub v_f_x: f64,
    pub v_f_y: f64,
    pub v_f_z: f64,
    pub e_b: f64,
    pub e_psi: f64,
}

impl From<&TraceRow> for TraceCsvRow {
    fn from(r: &TraceRow) -> Self {
        Self {
            t: r.t,
            phase: r.phase.map_or(String::new(), |p| p.as_str().to_string()),
            p_l_x: r.p_l.x,
            p_l_y: r.p_l.y,
            p_l_z: r.p_l.z,
            v_l_x: r.v_l.x,
            v_l_y: r.v_l.y,
            v_l_z: r.v_l.z,
            p_f_x: r.p_f.x,
            p_f_y: r.p_f.y,
            p_f_z: r.p_f.z,
            v_f_x: r.v_f.x,
            v_f_y: r.v_f.y,
            v_f_z: r.v_f.z,
            e_b: r.e_b,
            e_psi: r.e_psi,
        }
    }
}

fn write_campaign(dir: &Path, cfg: &TrialConfig, c: &Campaign, base_seed: u64) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    let mut w = csv::Writer::from_writer(create(&dir.join("campaign.csv"))?);
    for t in &c.trials {
        w.serialize(t).map_err(csv_err)?;
    }
    w.flush()?;
    outputs.push("campaign.csv".to_string());
    write_json(&dir.join("campaign_summary.json"), &c.summary)?;
    outputs.push("campaign_summary.json".to_string());
    write_text(&dir.join("config.toml"), &config::to_toml(cfg)?)?;
    outputs.push("config.toml".to_string());
    for (i, trace) in c.traces.iter().enumerate() {
        let name = format!("traces/seed_{}.csv", base_seed + i as u64);
        let mut w = csv::Writer::from_writer(create(&dir.join(&name))?);
        for r in trace {
            w.serialize(TraceCsvRow::from(r)).map_err(csv_err)?;
        }
        w.flush()?;
        outputs.push(name);
    }
    Ok(outputs)
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    seed: u64,
    supervisor_enabled: bool,
    config_digest: &'a str,
    outcome: crate::bench::Outcome,
    final_phase: crate::supervisor::Phase,
    time_to_dock: Option<f64>,
    baseline_rms: Option<f64>,
    yaw_rms: Option<f64>,
    t_max: f64,
    n_ticks: usize,
}

fn cmd_run(cfg: TrialConfig, seed: Option<u64>, out: &Path) -> Result<i32> {
    let mut cfg = cfg;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let started = now();
    let rec = run_trial(&cfg)?;
    std::fs::create_dir_all(out)?;
    log::write_log(&rec, create(&out.join("trial.jsonl"))?)?;
    let c = consistency_metrics(&rec);
    write_json(
        &out.join("summary.json"),
        &RunSummary {
            seed: rec.seed,
            supervisor_enabled: rec.supervisor_enabled,
            config_digest: &rec.config_digest,
            outcome: rec.outcome,
            final_phase: rec.final_phase,
            time_to_dock: rec.time_to_dock,
            baseline_rms: c.map(|x| x.0),
            yaw_rms: c.map(|x| x.1),
            t_max: rec.t_max,
            n_ticks: rec.ticks.len(),
        },
    )?;
    write_text(&out.join("config.toml"), &config::to_toml(&cfg)?)?;
    write_json(
        &out.join("manifest.json"),
        &RunManifest {
            tool_version: crate::VERSION.into(),
            command: "run".into(),
            config_digest: cfg.digest(),
            seeds: vec![cfg.seed],
            started_at: started,
            finished_at: now(),
            outputs: ["trial.jsonl", "summary.json", "config.toml", "manifest.json"]
                .map(String::from)
                .to_vec(),
        },
    )?;
    say!("outcome: {} ({})", rec.outcome, rec.final_phase.as_str());
    if let Some(t) = rec.time_to_dock {
        say!("time to dock: {t:.2} s");
    }
    Ok(if rec.outcome.is_success() {
        EXIT_OK
    } else {
        EXIT_TRIAL_FAILURE
    })
}

fn print_summary(label: &str, c: &Campaign) {
    let s = &c.summary;
    say!(
        "{label}{}/{} succeeded, rate {:.3} [{:.3}, {:.3}]",
        s.successes,
        s.n_trials,
        s.success_rate.estimate,
        s.success_rate.lo,
        s.success_rate.hi
    );
}

fn cmd_campaign(
    cfg: TrialConfig,
    n: u64,
    seed: u64,
    opts: CampaignOptions,
    ablation: bool,
    out: &Path,
) -> Result<i32> {
    let started = now();
    let seeds: Vec<u64> = (seed..seed + n).collect();
    let mut outputs = Vec::new();
    if ablation {
        let ab = run_ablation(&cfg, n, seed, &opts)?;
        let mut on_cfg = cfg.clone();
        on_cfg.supervisor_enabled = true;
        let mut off_cfg = cfg.clone();
        off_cfg.supervisor_enabled = false;
        for (name, c, arm) in [("on", &ab.on, &on_cfg), ("off", &ab.off, &off_cfg)] {
            let files = write_campaign(&out.join(name), arm, c, seed)?;
            outputs.extend(files.into_iter().map(|f| format!("{name}/{f}")));
            print_summary(&format!("supervisor {name}: "), c);
        }
        write_json(&out.join("ablation.json"), &ab.report)?;
        outputs.push("ablation.json".into());
        say!(
            "on-only {}, off-only {}, sign test p = {:.3e}",
            ab.report.on_only,
            ab.report.off_only,
            ab.report.p_value
        );
    } else {
        let c = run_campaign(&cfg, n, seed, &opts)?;
        outputs = write_campaign(out, &cfg, &c, seed)?;
        print_summary("", &c);
    }
    outputs.push("manifest.json".into());
    write_json(
        &out.join("manifest.json"),
        &RunManifest {
            tool_version: crate::VERSION.into(),
            command: if ablation {
                "campaign --ablation"
            } else {
                "campaign"
            }
            .into(),
            config_digest: cfg.digest(),
            seeds,
            started_at: started,
            finished_at: now(),
            outputs,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct TuneOutput {
    tool_version: String,
    config_digest: String,
    bounds: GainBounds,
    bo: BoConfig,
    scenario: StepScenario,
    default_objective: f64,
    result: crate::tuning::TuneResult,
}

fn cmd_tune(cfg: TrialConfig, bo: BoConfig, out: &Path) -> Result<i32> {
    let bounds = GainBounds::default();
    let scenario = StepScenario::default();
    let default_objective = evaluate_gains(&cfg.gains.follower, &cfg, &scenario)?.objective;
    let result = bo_tune(&cfg, &bounds, &bo)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    say!(
        "best objective {:.4} (preset gains {:.4}) after {} evaluations",
        result.best_objective,
        default_objective,
        result.history.len()
    );
    write_json(
        out,
        &TuneOutput {
            tool_version: crate::VERSION.into(),
            config_digest: cfg.digest(),
            bounds,
            bo,
            scenario,
            default_objective,
            result,
        },
    )?;
    Ok(EXIT_OK)
}

fn cmd_replay(log_path: &Path, config_path: Option<&Path>) -> Result<i32> {
    let file =
        File::open(log_path).map_err(|e| Error::Log(format!("cannot open {}: {e}", log_path.display())))?;
    let log = log::read_log(BufReader::new(file))?;
    let cfg_path = match config_path {
        Some(p) => p.to_path_buf(),
        None => log_path.with_file_name("config.toml"),
    };
    // the materialised config is complete, so the preset does not matter
    let cfg = config::load_config(Some(&cfg_path), Preset::Sim2m)?;
    if cfg.digest() != log.header.config_digest {
        return Err(Error::Config(format!(
            "{} does not match the log (digest {} vs {})",
            cfg_path.display(),
            cfg.digest(),
            log.header.config_digest
        )));
    }
    let violations = replay::audit(&log, &cfg);
    if violations.is_empty() {
        say!(
            "audit passed: {} ticks, outcome {}",
            log.rows.len(),
            log.footer.outcome
        );
        Ok(EXIT_OK)
    } else {
        for v in &violations {
            say!("tick {} (t = {}): {}", v.tick, v.t, v.message);
        }
        say!("audit failed: {} violation(s)", violations.len());
        Ok(EXIT_AUDIT_VIOLATION)
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { cfg, seed, out } => cmd_run(cfg.load()?, seed, &out_or(out, "run")),
        Command::Campaign {
            cfg,
            n,
            seed,
            parallelism,
            trace_hz,
            ablation,
            out,
        } => cmd_campaign(
            cfg.load()?,
            n,
            seed,
            CampaignOptions {
                parallelism,
                trace_hz,
            },
            ablation,
            &out_or(out, "campaign"),
        ),
        Command::Tune {
            cfg,
            seed,
            budget,
            n_init,
            batch,
            out,
        } => {
            let bo = BoConfig {
                budget,
                n_init,
                batch_size: batch,
                seed,
                ..BoConfig::default()
            };
            cmd_tune(cfg.load()?, bo, &out_or(out, "tune.json"))
        }
        Command::Replay { log, config } => cmd_replay(&log, config.as_deref()),
        Command::Report { campaign_dir, out } => report::cmd_report(&campaign_dir, &out_or(out, "report")),
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_TOOL_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_TOOL_ERROR
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
