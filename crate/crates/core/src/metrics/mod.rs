//! Diversity and quality measurement.

mod coverage;
mod embedder;
mod inception;
pub mod linalg;
pub mod vendi;

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub use coverage::{coverage_threshold, label_coverage, mode_coverage};
pub use embedder::{Embedder, EmbedderTraining};
pub use inception::{inception_score_from_probs, inception_style_score};
pub use vendi::{
    default_curve_schedule, incremental_vendi_curve, vendi_from_features, vendi_score, write_curve_csv,
    SimilarityKernel,
};


pub const REPORT_HEADER: &str = "run_id,task,mean_reward,se_reward,vendi_raw,vendi_embed,is_score,mode_coverage";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub run_id: String,
    pub task: String,
    pub mean_reward: f64,
    pub se_reward: f64,
    pub vendi_raw: f64,
    pub vendi_embed: f64,
    pub is_score: f64,
    /// Covered modes (an integer count, stored as real for aggregation).
    pub mode_coverage: f64,
}

impl MetricsReport {
    pub fn values(&self) -> [f64; 6] {
        [
            self.mean_reward,
            self.se_reward,
            self.vendi_raw,
            self.vendi_embed,
            self.is_score,
            self.mode_coverage,
        ]
    }

    pub fn csv_row(&self) -> String {
        let v = self.values();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.run_id, self.task, v[0], v[1], v[2], v[3], v[4], v[5]
        )
    }

    pub fn write_csv<W: Write>(reports: &[MetricsReport], mut w: W) -> std::io::Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        for r in reports {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, origin: &std::path::Path) -> Result<Vec<MetricsReport>> {
        let bad = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason,
        };
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(origin, e))?
            .ok_or_else(|| bad("empty report".into()))?;
        if header.trim() != REPORT_HEADER {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut out = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 8 {
                return Err(bad(format!("row {} has {} columns", i + 1, cols.len())));
            }
            let num = |k: usize| -> Result<f64> {
                cols[k]
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("row {} column {k}: {:?} is not a number", i + 1, cols[k])))
            };
            out.push(MetricsReport {
                run_id: cols[0].to_string(),
                task: cols[1].to_string(),
                mean_reward: num(2)?,
                se_reward: num(3)?,
                vendi_raw: num(4)?,
                vendi_embed: num(5)?,
                is_score: num(6)?,
                mode_coverage: num(7)?,
            });
        }
        Ok(out)
    }
}

/// Sample mean and standard error (`s/√n`, with `n−1` in the variance).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
