//! The trace CSV schema.
//!
//! One row per checkpoint, with columns
//! `epoch,t,k,tau,W,h_sq_norm,ce_count,mstep_count,wall_ms,status`.
//! The first row is the starting point (epoch 0). `status` is `running`
//! except on the last row, which carries the terminal status (`completed`,
//! `hit-target`, `stopped` or `diverged`). When a run ends between
//! checkpoints, a terminal row with empty `t`, `k`, `W` and `h_sq_norm`
//! records its final counters. Reals are written in shortest round-trip
//! exponent form; `wall_ms` is the only field that varies between
//! identical runs.

use std::path::Path;

use spider_em::algorithms::RunTrace;

use crate::error::{HarnessError, Result};

pub const COLUMNS: [&str; 10] = [
    "epoch",
    "t",
    "k",
    "tau",
    "W",
    "h_sq_norm",
    "ce_count",
    "mstep_count",
    "wall_ms",
    "status",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COLUMNS)?;
    let last = trace.checkpoints.last();
    let needs_terminal = last.is_none_or(|c| c.tau != trace.tau || c.counts != trace.counts);
    for (i, c) in trace.checkpoints.iter().enumerate() {
        let status = if !needs_terminal && i + 1 == trace.checkpoints.len() {
            trace.status.as_str()
        } else {
            "running"
        };
        w.write_record([
            c.epoch.to_string(),
            c.t.to_string(),
            c.k.to_string(),
            c.tau.to_string(),
            fmt_opt(c.objective),
            fmt_opt(c.h_sq_norm),
            c.counts.ce.to_string(),
            c.counts.m_steps.to_string(),
            format!("{:.3}", c.wall_ms),
            status.to_string(),
        ])?;
    }
    if needs_terminal {
        let wall = last.map_or(0.0, |c| c.wall_ms);
        w.write_record([
            trace.epochs().to_string(),
            String::new(),
            String::new(),
            trace.tau.to_string(),
            String::new(),
            String::new(),
            trace.counts.ce.to_string(),
            trace.counts.m_steps.to_string(),
            format!("{wall:.3}"),
            trace.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub epoch: u64,
    pub t: Option<u64>,
    pub k: Option<i64>,
    pub tau: u64,
    pub objective: Option<f64>,
    pub h_sq_norm: Option<f64>,
    pub ce_count: u64,
    pub mstep_count: u64,
    pub wall_ms: f64,
    pub status: String,
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        HarnessError::Input(format!("{}: line {line}: bad {name} value '{raw}'", path.display()))
    })
}

fn opt_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<Option<T>> {
    if raw.is_empty() {
        Ok(None)
    } else {
        field(path, line, name, raw).map(Some)
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(HarnessError::Input(format!("{}: unexpected columns {header:?}", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        rows.push(TraceRow {
            epoch: field(path, line, "epoch", &rec[0])?,
            t: opt_field(path, line, "t", &rec[1])?,
            k: opt_field(path, line, "k", &rec[2])?,
            tau: field(path, line, "tau", &rec[3])?,
            objective: opt_field(path, line, "W", &rec[4])?,
            h_sq_norm: opt_field(path, line, "h_sq_norm", &rec[5])?,
            ce_count: field(path, line, "ce_count", &rec[6])?,
            mstep_count: field(path, line, "mstep_count", &rec[7])?,
            wall_ms: field(path, line, "wall_ms", &rec[8])?,
            status: rec[9].to_string(),
        });
    }
    Ok(rows)
}

/// The file with its `wall_ms` column blanked, for byte comparisons.
pub fn without_wall_clock(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|line| {
            let mut cols: Vec<&str> = line.split(',').collect();
            if cols.len() == COLUMNS.len() {
                cols[8] = "";
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n"))
}
