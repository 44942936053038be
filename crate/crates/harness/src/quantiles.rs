//! Per-epoch quantiles across seeds.

use std::path::{Path, PathBuf};

use statrs::statistics::{Data, OrderStatistics};

use crate::error::{HarnessError, Result};
use crate::trace_csv::{fmt_f64, read_trace, TraceRow};

#[derive(Clone, Debug, PartialEq)]
pub struct QuantileRow {
    pub epoch: u64,
    pub tau: u64,
    /// `h_sq_norm` or `W`.
    pub metric: &'static str,
    /// One value per requested quantile; `None` when any trace lacks the
    /// metric at this checkpoint.
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTable {
    pub quantiles: Vec<f64>,
    pub traces: usize,
    pub rows: Vec<QuantileRow>,
}

impl QuantileTable {
    /// Quantile `qi` (an index into `quantiles`) of `metric` at the last
    /// checkpoint of `epoch`.
    pub fn at(&self, epoch: u64, metric: &str, qi: usize) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.epoch == epoch && r.metric == metric)
            .and_then(|r| r.values.as_ref())
            .map(|v| v[qi])
    }

    /// Quantile `qi` of `metric` at the final checkpoint.
    pub fn terminal(&self, metric: &str, qi: usize) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.metric == metric)
            .and_then(|r| r.values.as_ref())
            .map(|v| v[qi])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["epoch".to_string(), "tau".to_string(), "metric".to_string()];
        header.extend(self.quantiles.iter().map(|q| format!("q{q}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.epoch.to_string(), r.tau.to_string(), r.metric.to_string()];
            match &r.values {
                Some(v) => rec.extend(v.iter().map(|x| fmt_f64(*x))),
                None => rec.extend(self.quantiles.iter().map(|_| String::new())),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn measured(rows: Vec<TraceRow>) -> Vec<TraceRow> {
    rows.into_iter()
        .filter(|r| r.objective.is_some() || r.h_sq_norm.is_some())
        .collect()
}

/// Quantiles of `h_sq_norm` and `W` at each checkpoint, across traces.
///
/// Every trace must have the same sequence of measured checkpoints, as
/// `(epoch, tau)` pairs; quantiles follow the R-8 definition, with 0 and 1
/// giving the minimum and maximum.
pub fn summarize_quantiles(paths: &[PathBuf], quantiles: &[f64]) -> Result<QuantileTable> {
    if paths.len() < 2 {
        return Err(HarnessError::Input("need at least two traces".into()));
    }
    if quantiles.is_empty() || quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(HarnessError::Input("quantiles must lie in [0, 1]".into()));
    }
    let traces: Vec<Vec<TraceRow>> = paths
        .iter()
        .map(|p| read_trace(p).map(measured))
        .collect::<Result<_>>()?;
    let reference: Vec<(u64, u64)> = traces[0].iter().map(|r| (r.epoch, r.tau)).collect();
    for (p, t) in paths.iter().zip(&traces).skip(1) {
        let keys: Vec<(u64, u64)> = t.iter().map(|r| (r.epoch, r.tau)).collect();
        if keys != reference {
            return Err(HarnessError::Input(format!(
                "{} is misaligned with {}: checkpoints differ",
                p.display(),
                paths[0].display()
            )));
        }
    }
    let mut rows = Vec::with_capacity(2 * reference.len());
    for (i, &(epoch, tau)) in reference.iter().enumerate() {
        for (metric, get) in [
            ("h_sq_norm", (|r: &TraceRow| r.h_sq_norm) as fn(&TraceRow) -> Option<f64>),
            ("W", |r: &TraceRow| r.objective),
        ] {
            let column: Option<Vec<f64>> = traces.iter().map(|t| get(&t[i])).collect();
            let values = column.map(|c| {
                let mut data = Data::new(c);
                quantiles.iter().map(|q| data.quantile(*q)).collect()
            });
            rows.push(QuantileRow {
                epoch,
                tau,
                metric,
                values,
            });
        }
    }
    Ok(QuantileTable {
        quantiles: quantiles.to_vec(),
        traces: paths.len(),
        rows,
    })
}
