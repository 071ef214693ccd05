//! JSON-lines trial log: a header line, one object per tick, a footer line.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::bench::{Outcome, TickRow, TrialRecord};
use crate::error::{Error, Result};
use crate::supervisor::Phase;

pub const LOG_SCHEMA: &str = "dockbench.trial/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub kind: String,
    pub schema: String,
    pub tool_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub supervisor_enabled: bool,
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogFooter {
    pub kind: String,
    pub outcome: Outcome,
    pub final_phase: Phase,
    pub time_to_dock: Option<f64>,
    pub n_ticks: usize,
}

pub fn write_log<W: Write>(rec: &TrialRecord, mut w: W) -> Result<()> {
    let header = LogHeader {
        kind: "header".into(),
        schema: LOG_SCHEMA.into(),
        tool_version: crate::VERSION.into(),
        config_digest: rec.config_digest.clone(),
        seed: rec.seed,
        supervisor_enabled: rec.supervisor_enabled,
        t_max: rec.t_max,
        dt: rec.dt,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for row in &rec.ticks {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    let footer = LogFooter {
        kind: "footer".into(),
        outcome: rec.outcome,
        final_phase: rec.final_phase,
        time_to_dock: rec.time_to_dock,
        n_ticks: rec.ticks.len(),
    };
    serde_json::to_writer(&mut w, &footer)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrialLog {
    pub header: LogHeader,
    pub rows: Vec<TickRow>,
    pub footer: LogFooter,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Log(format!("line {line}: {msg}"))
}

/// Reads a complete log; rejects empty, truncated and foreign-schema files.
pub fn read_log<R: BufRead>(r: R) -> Result<TrialLog> {
    let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (n, first) = lines.next().ok_or_else(|| Error::Log("log is empty".into()))?;
    let header: LogHeader = serde_json::from_str(&first?).map_err(|e| bad(n, format!("bad header: {e}")))?;
    if header.kind != "header" {
        return Err(bad(n, "first line is not a header"));
    }
    if header.schema != LOG_SCHEMA {
        return Err(bad(
            n,
            format!(
                "schema {} is not supported (expected {LOG_SCHEMA})",
                header.schema
            ),
        ));
    }
    let mut rows = Vec::new();
    let mut footer = None;
    for (n, line) in lines {
        let line = line?;
        if footer.is_some() {
            return Err(bad(n, "data after footer"));
        }
        if line.contains("\"kind\":\"footer\"") {
            footer = Some(serde_json::from_str::<LogFooter>(&line).map_err(|e| bad(n, e))?);
        } else {
            rows.push(serde_json::from_str::<TickRow>(&line).map_err(|e| bad(n, e))?);
        }
    }
    let footer = footer.ok_or_else(|| Error::Log("log is truncated: no footer".into()))?;
    if footer.n_ticks != rows.len() {
        return Err(Error::Log(format!(
            "log is truncated: footer announces {} ticks, found {}",
            footer.n_ticks,
            rows.len()
        )));
    }
    Ok(TrialLog { header, rows, footer })
}
