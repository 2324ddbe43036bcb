//! `overlap_<metric>.csv` and `overlap_summary.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlap::bins::{stratify, OverlapBin, Strata};
use crate::overlap::index::OverlapRecord;
use crate::overlap::metrics::OverlapMetric;
use crate::traj::TrajectoryId;

pub const SUMMARY_FILE: &str = "overlap_summary.json";

pub fn overlap_csv_name(metric: OverlapMetric) -> String {
    format!("overlap_{}.csv", metric.as_str())
}

pub fn overlap_csv_path(dir: &Path, metric: OverlapMetric) -> PathBuf {
    dir.join(overlap_csv_name(metric))
}

pub fn write_overlap_csv(path: &Path, records: &[OverlapRecord]) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["test_trajectory_id", "score", "argmax_train_id", "bin"])
        .map_err(io)?;
    for r in records {
        w.write_record([
            r.test.0.to_string(),
            r.score.to_string(),
            r.argmax_train.0.to_string(),
            r.bin.label().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_overlap_csv(path: &Path, metric: OverlapMetric) -> Result<Vec<OverlapRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        if row.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", row.len())));
        }
        let test: u64 = row[0].parse().map_err(|_| parse_err("bad test id".into()))?;
        let score: f64 = row[1].parse().map_err(|_| parse_err("bad score".into()))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_err(format!("score {score} outside [0, 1]")));
        }
        let argmax: u64 = row[2].parse().map_err(|_| parse_err("bad train id".into()))?;
        let bin: OverlapBin = row[3].parse().map_err(|e: Error| parse_err(e.to_string()))?;
        if bin != OverlapBin::from_score(score) {
            return Err(parse_err(format!("bin {bin} inconsistent with score {score}")));
        }
        out.push(OverlapRecord {
            test: TrajectoryId(test),
            metric,
            score,
            argmax_train: TrajectoryId(argmax),
            bin,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub test_trajectories: usize,
    pub counts: BTreeMap<OverlapBin, usize>,
    pub fractions: BTreeMap<OverlapBin, f64>,
}

impl MetricSummary {
    pub fn from_strata(s: &Strata) -> Self {
        Self {
            test_trajectories: s.len(),
            counts: s.counts(),
            fractions: s.fractions(),
        }
    }
}

/// Per-metric bin fractions of the test set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub jaccard_variant: String,
    pub metrics: BTreeMap<OverlapMetric, MetricSummary>,
}

/// Loads every `overlap_<metric>.csv` present in `dir` and stratifies it.
pub fn load_strata(dir: &Path, metrics: &[OverlapMetric]) -> Result<BTreeMap<OverlapMetric, Strata>> {
    let mut out = BTreeMap::new();
    for &m in metrics {
        let p = overlap_csv_path(dir, m);
        if !p.is_file() {
            return Err(Error::input(format!("missing {}", p.display())));
        }
        out.insert(m, stratify(&read_overlap_csv(&p, m)?)?);
    }
    Ok(out)
}

/// Metrics whose overlap CSV exists in `dir`.
pub fn available_metrics(dir: &Path) -> Vec<OverlapMetric> {
    OverlapMetric::ALL
        .into_iter()
        .filter(|&m| overlap_csv_path(dir, m).is_file())
        .collect()
}
