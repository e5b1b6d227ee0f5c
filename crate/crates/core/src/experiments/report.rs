//! Aggregation of per-run metric reports across seeds.

use std::collections::BTreeMap;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::pipeline::{require, REPORT_FILE};
use crate::metrics::{mean_and_se, MetricsReport, REPORT_HEADER};

pub const AGGREGATE_HEADER: &str = "task,method,metric,n,mean,se";

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub task: String,
    /// Run id with its trailing `-s<seed>` removed.
    pub method: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

fn strip_seed(run_id: &str) -> &str {
    match run_id.rfind("-s") {
        Some(i) if run_id[i + 2..].chars().all(|c| c.is_ascii_digit()) && i + 2 < run_id.len() => &run_id[..i],
        _ => run_id,
    }
}

/// Reads `metrics/report.csv` from each directory (or a report file given
/// directly).
pub fn read_reports(paths: &[PathBuf]) -> Result<Vec<MetricsReport>> {
    let mut all = Vec::new();
    for p in paths {
        let file = if p.is_dir() { p.join(REPORT_FILE) } else { p.clone() };
        require(&file)?;
        let f = std::fs::File::open(&file).map_err(|e| Error::io(&file, e))?;
        all.extend(MetricsReport::read_csv(BufReader::new(f), &file)?);
    }
    Ok(all)
}

/// Mean ± standard error of every metric per (task, method) group.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<AggregateRow> {
    let names: Vec<&str> = REPORT_HEADER.split(',').skip(2).collect();
    let mut groups: BTreeMap<(String, String), Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.task.clone(), strip_seed(&r.run_id).to_string()))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::new();
    for ((task, method), members) in groups {
        for (k, name) in names.iter().enumerate() {
            let values: Vec<f64> = members.iter().map(|r| r.values()[k]).collect();
            let (mean, se) = mean_and_se(&values);
            rows.push(AggregateRow {
                task: task.clone(),
                method: method.clone(),
                metric: name.to_string(),
                n: values.len(),
                mean,
                se,
            });
        }
    }
    rows
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.task, r.method, r.metric, r.n, r.mean, r.se)?;
    }
    Ok(())
}

pub fn report(paths: &[PathBuf], out: &Path) -> Result<Vec<AggregateRow>> {
    if paths.is_empty() {
        return Err(Error::config("report needs at least one run directory"));
    }
    let rows = aggregate(&read_reports(paths)?);
    crate::experiments::pipeline::write_with(out, |w| write_aggregate_csv(&rows, w))?;
    Ok(rows)
}
