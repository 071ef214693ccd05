//! Markdown report and plot-data files recomputed from `campaign.csv`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{create, csv_err, write_text, EXIT_OK};
use crate::bench::{sign_test_p, summarize, CampaignSummary, TrialSummary};
use crate::error::{Error, Result};

pub fn read_campaign_csv(path: &Path) -> Result<Vec<TrialSummary>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<TrialSummary>, _>>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(Error::Config(format!("{} has no trials", path.display())));
    }
    Ok(rows)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.digits$}"))
}

fn section(md: &mut String, title: &str, s: &CampaignSummary) {
    let r = &s.success_rate;
    let _ = writeln!(md, "## {title}\n");
    let _ = writeln!(md, "| metric | value |\n|---|---|");
    let _ = writeln!(md, "| trials | {} |", s.n_trials);
    let _ = writeln!(md, "| successes | {} |", s.successes);
    let _ = writeln!(
        md,
        "| success rate (95% Wilson) | {:.3} [{:.3}, {:.3}] |",
        r.estimate, r.lo, r.hi
    );
    let t = s.time_to_dock;
    let _ = writeln!(md, "| time to dock mean, s | {} |", opt(t.map(|t| t.mean), 2));
    let _ = writeln!(md, "| time to dock median, s | {} |", opt(t.map(|t| t.median), 2));
    let _ = writeln!(md, "| time to dock p95, s | {} |", opt(t.map(|t| t.p95), 2));
    let _ = writeln!(md, "| Settle baseline RMS, m | {} |", opt(s.baseline_rms, 5));
    let _ = writeln!(md, "| Settle yaw RMS, rad | {} |", opt(s.yaw_rms, 5));
    let _ = writeln!(md, "\n| failure mode | count |\n|---|---|");
    for (m, k) in &s.failure_histogram {
        let _ = writeln!(md, "| {} | {k} |", m.as_str());
    }
    let _ = writeln!(md);
}

fn plot_data(dir: &Path, out: &Path, rows: &[TrialSummary], s: &CampaignSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(&out.join("time_to_dock.csv"))?);
    w.write_record(["seed", "time_to_dock"]).map_err(csv_err)?;
    for r in rows.iter().filter(|r| r.outcome.is_success()) {
        if let Some(t) = r.time_to_dock {
            w.write_record([r.seed.to_string(), t.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(&out.join("failure_histogram.csv"))?);
    w.write_record(["failure_mode", "count"]).map_err(csv_err)?;
    for (m, k) in &s.failure_histogram {
        w.write_record([m.as_str().to_string(), k.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    let traces = dir.join("traces");
    if traces.is_dir() {
        let dest = out.join("traces");
        std::fs::create_dir_all(&dest)?;
        let mut names: Vec<PathBuf> = std::fs::read_dir(&traces)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        names.sort();
        for p in names {
            std::fs::copy(&p, dest.join(p.file_name().expect("file name")))?;
        }
    }
    Ok(())
}

/// Writes `report.md` and `plot_data/` for a campaign directory, or for an
/// ablation directory holding `on/` and `off/` campaigns.
pub fn cmd_report(dir: &Path, out: &Path) -> Result<i32> {
    let single = dir.join("campaign.csv");
    let mut md = String::from("# Docking campaign report\n\n");
    let _ = writeln!(md, "Source: `{}`\n", dir.display());
    if single.is_file() {
        let rows = read_campaign_csv(&single)?;
        let s = summarize(&rows)?;
        section(&mut md, "Results", &s);
        plot_data(dir, &out.join("plot_data"), &rows, &s)?;
    } else if dir.join("on/campaign.csv").is_file() && dir.join("off/campaign.csv").is_file() {
        let on = read_campaign_csv(&dir.join("on/campaign.csv"))?;
        let off = read_campaign_csv(&dir.join("off/campaign.csv"))?;
        if on.len() != off.len() || on.iter().zip(&off).any(|(a, b)| a.seed != b.seed) {
            return Err(Error::Config(
                "on/ and off/ campaigns do not cover the same seeds".into(),
            ));
        }
        let (son, soff) = (summarize(&on)?, summarize(&off)?);
        section(&mut md, "Supervisor on", &son);
        section(&mut md, "Supervisor off", &soff);
        let on_only = on
            .iter()
            .zip(&off)
            .filter(|(a, b)| a.outcome.is_success() && !b.outcome.is_success())
            .count() as u64;
        let off_only = on
            .iter()
            .zip(&off)
            .filter(|(a, b)| !a.outcome.is_success() && b.outcome.is_success())
            .count() as u64;
        let _ = writeln!(md, "## Paired comparison\n");
        let _ = writeln!(md, "| metric | value |\n|---|---|");
        let _ = writeln!(md, "| paired seeds | {} |", on.len());
        let _ = writeln!(md, "| only supervisor on succeeded | {on_only} |");
        let _ = writeln!(md, "| only supervisor off succeeded | {off_only} |");
        let _ = writeln!(
            md,
            "| one-sided sign test p | {:.3e} |",
            sign_test_p(on_only, off_only)
        );
        plot_data(&dir.join("on"), &out.join("plot_data/on"), &on, &son)?;
        plot_data(&dir.join("off"), &out.join("plot_data/off"), &off, &soff)?;
    } else {
        return Err(Error::Config(format!(
            "{} holds no campaign.csv (nor on/ and off/ campaigns)",
            dir.display()
        )));
    }
    write_text(&out.join("report.md"), &md)?;
    say!("report written to {}", out.join("report.md").display());
    Ok(EXIT_OK)
}
