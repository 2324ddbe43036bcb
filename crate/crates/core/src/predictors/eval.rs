//! Prediction tasks, ACC@k, and report layouts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlap::{OverlapBin, OverlapMetric, Strata};
use crate::predictors::scores::ScoreTable;
use crate::traj::{LocationId, Trajectory, TrajectoryId};

/// Marker written wherever an accuracy or ratio is undefined.
pub const UNDEFINED: &str = "undefined";

/// A held-out next location: the trajectory minus its final point, and
/// that final point's location.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTask {
    pub trajectory: TrajectoryId,
    pub prefix: Trajectory,
    pub target: LocationId,
}

impl PredictionTask {
    pub fn user(&self) -> &str {
        self.prefix.user()
    }

    pub fn anchor(&self) -> LocationId {
        self.prefix.last_location()
    }
}

/// Tasks for every trajectory with at least two points, and the number of
/// single-point trajectories skipped.
pub fn prediction_tasks(trajectories: &[Trajectory]) -> (Vec<PredictionTask>, usize) {
    let mut skipped = 0;
    let tasks = trajectories
        .iter()
        .filter_map(|t| {
            let r = t.split_last().map(|(prefix, target)| PredictionTask {
                trajectory: t.id(),
                prefix,
                target,
            });
            if r.is_none() {
                skipped += 1;
            }
            r
        })
        .collect();
    (tasks, skipped)
}

pub type GroundTruth = BTreeMap<TrajectoryId, LocationId>;

pub fn ground_truth(tasks: &[PredictionTask]) -> GroundTruth {
    tasks.iter().map(|t| (t.trajectory, t.target)).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub count: usize,
    pub hits: usize,
    /// `None` for an empty group.
    pub acc: Option<f64>,
}

impl Accuracy {
    fn from_counts(count: usize, hits: usize) -> Self {
        Self {
            count,
            hits,
            acc: (count > 0).then(|| hits as f64 / count as f64),
        }
    }
}

pub fn format_acc(acc: Option<f64>) -> String {
    acc.map_or_else(|| UNDEFINED.to_string(), |a| format!("{a:.3}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub k: usize,
    pub overall: Accuracy,
    /// Trajectories with truth but no ranked list; counted as misses.
    pub unscored: usize,
    pub strata: BTreeMap<OverlapMetric, BTreeMap<OverlapBin, Accuracy>>,
}

/// Whether the target is among the first `k` candidates.
pub fn hit_at_k(scores: &ScoreTable, id: TrajectoryId, target: LocationId, k: usize) -> bool {
    scores
        .get(id)
        .is_some_and(|c| c.iter().take(k).any(|c| c.location == target))
}

/// ACC@k over all trajectories in `truth`, overall and per stratum.
///
/// Every scored trajectory must have a truth entry. Trajectories with
/// truth but no scores count as misses.
pub fn acc_at_k(
    scores: &ScoreTable,
    truth: &GroundTruth,
    k: usize,
    strata: Option<&BTreeMap<OverlapMetric, Strata>>,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    if let Some(id) = scores.ids().find(|id| !truth.contains_key(id)) {
        return Err(Error::validation(format!(
            "no ground truth for scored trajectory {id}"
        )));
    }
    let coverage = scores.coverage(truth.keys().copied());
    if !coverage.missing.is_empty() {
        log::warn!(
            "{}: {} of {} trajectories have no scores",
            scores.name(),
            coverage.missing.len(),
            truth.len()
        );
    }

    let hits: BTreeMap<TrajectoryId, bool> = truth
        .iter()
        .map(|(&id, &target)| (id, hit_at_k(scores, id, target, k)))
        .collect();
    let total_hits = hits.values().filter(|&&h| h).count();

    let mut per_metric = BTreeMap::new();
    for (&metric, s) in strata.into_iter().flatten() {
        let mut counts: BTreeMap<OverlapBin, (usize, usize)> =
            OverlapBin::ALL.into_iter().map(|b| (b, (0, 0))).collect();
        for (&id, &hit) in &hits {
            let bin = s.bin_of(id).ok_or_else(|| {
                Error::validation(format!("trajectory {id} has no {metric} overlap record"))
            })?;
            let e = counts.entry(bin).or_default();
            e.0 += 1;
            e.1 += hit as usize;
        }
        per_metric.insert(
            metric,
            counts
                .into_iter()
                .map(|(b, (c, h))| (b, Accuracy::from_counts(c, h)))
                .collect(),
        );
    }

    Ok(EvalReport {
        model: scores.name().to_string(),
        k,
        overall: Accuracy::from_counts(truth.len(), total_hits),
        unscored: coverage.missing.len(),
        strata: per_metric,
    })
}

fn write_rows(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per model, with a column per metric × bin.
pub fn write_accuracy_table(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let metrics: Vec<OverlapMetric> = OverlapMetric::ALL
        .into_iter()
        .filter(|m| reports.iter().any(|r| r.strata.contains_key(m)))
        .collect();
    let mut header = vec!["model".to_string(), "overall".to_string()];
    for m in &metrics {
        for b in OverlapBin::ALL {
            header.push(format!("{} {}", m.label(), b.label()));
        }
    }
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.model.clone(), format_acc(r.overall.acc)];
            for m in &metrics {
                for b in OverlapBin::ALL {
                    row.push(format_acc(r.strata.get(m).and_then(|s| s.get(&b)).and_then(|a| a.acc)));
                }
            }
            row
        })
        .collect();
    write_rows(path, header, rows)
}

/// Tidy long-format rows: model, metric, bin, count, hits, acc.
pub fn write_accuracy_tidy(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let header = ["model", "k", "metric", "bin", "count", "hits", "acc"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for r in reports {
        let acc = |a: Option<f64>| a.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string());
        rows.push(vec![
            r.model.clone(),
            r.k.to_string(),
            "all".into(),
            "all".into(),
            r.overall.count.to_string(),
            r.overall.hits.to_string(),
            acc(r.overall.acc),
        ]);
        for (m, bins) in &r.strata {
            for (b, a) in bins {
                rows.push(vec![
                    r.model.clone(),
                    r.k.to_string(),
                    m.label().to_string(),
                    b.label().to_string(),
                    a.count.to_string(),
                    a.hits.to_string(),
                    acc(a.acc),
                ]);
            }
        }
    }
    write_rows(path, header, rows)
}
