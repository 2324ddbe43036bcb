//! Rescoring ranked lists and measuring the gain over the base predictor.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlap::{OverlapBin, OverlapMetric, Strata};
use crate::predictors::{acc_at_k, Candidate, EvalReport, GroundTruth, PredictionTask, ScoreTable, UNDEFINED};
use crate::rerank::model::Scorer;
use crate::rerank::samples::{FeatureContext, TrajectoryFeaturizer};

/// Rescores every candidate of every trajectory in `scores` and re-sorts
/// descending. Ties go to the lower location id, except in passthrough
/// mode, which keeps the input order so rankings are reproduced exactly.
pub fn rerank(
    scorer: &Scorer,
    scores: &ScoreTable,
    tasks: &[PredictionTask],
    ctx: &FeatureContext<'_>,
) -> Result<ScoreTable> {
    let by_id: BTreeMap<_, _> = tasks.iter().map(|t| (t.trajectory, t)).collect();
    let rows: Vec<_> = scores.iter().collect();
    let rescored: Vec<Result<_>> = rows
        .par_iter()
        .map(|&(id, cands)| {
            let task = by_id.get(&id).ok_or_else(|| {
                Error::validation(format!("scored trajectory {id} has no prediction task"))
            })?;
            let fz = TrajectoryFeaturizer::new(ctx, task)?;
            let mut out: Vec<Candidate> = cands
                .iter()
                .map(|c| Candidate::new(c.location, scorer.score(&fz.features(c.score, c.location))))
                .collect();
            if out.iter().any(|c| !c.score.is_finite()) {
                return Err(Error::pipeline(format!("non-finite rescore for trajectory {id}")));
            }
            match scorer {
                Scorer::Passthrough => out.sort_by(|a, b| b.score.total_cmp(&a.score)),
                Scorer::Network(_) => out.sort_by(|a, b| {
                    b.score.total_cmp(&a.score).then(a.location.cmp(&b.location))
                }),
            }
            Ok((id, out))
        })
        .collect();
    let mut table = ScoreTable::new(format!("{}+laws", scores.name()), scores.depth());
    for r in rescored {
        let (id, c) = r?;
        table.insert(id, c)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    /// `None` for the unstratified row.
    pub metric: Option<OverlapMetric>,
    pub bin: Option<OverlapBin>,
    pub count: usize,
    pub base: Option<f64>,
    pub reranked: Option<f64>,
    /// `(reranked - base) / base`; `None` when the base is zero or empty.
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub base_model: String,
    pub k: usize,
    pub rows: Vec<ImprovementRow>,
}

pub fn relative_improvement(base: Option<f64>, reranked: Option<f64>) -> Option<f64> {
    match (base, reranked) {
        (Some(b), Some(r)) if b > 0.0 => Some((r - b) / b),
        _ => None,
    }
}

/// `+96.15%` style, or the undefined marker.
pub fn format_relative(rel: Option<f64>) -> String {
    match rel {
        Some(r) => {
            let pct = r * 100.0;
            // Avoid printing "-0.00%".
            let pct = if pct.abs() < 0.005 { 0.0 } else { pct };
            format!("{pct:+.2}%")
        }
        None => UNDEFINED.to_string(),
    }
}

/// ACC@k of both tables, overall and per (metric, bin).
pub fn evaluate_improvement(
    base: &ScoreTable,
    reranked: &ScoreTable,
    truth: &GroundTruth,
    k: usize,
    strata: Option<&BTreeMap<OverlapMetric, Strata>>,
) -> Result<ImprovementReport> {
    let cov = reranked.coverage(base.ids());
    if !cov.is_complete() {
        return Err(Error::validation(format!(
            "tables cover different trajectories ({} missing, {} extra)",
            cov.missing.len(),
            cov.unexpected.len()
        )));
    }
    let a: EvalReport = acc_at_k(base, truth, k, strata)?;
    let b: EvalReport = acc_at_k(reranked, truth, k, strata)?;
    let mut rows = vec![ImprovementRow {
        metric: None,
        bin: None,
        count: a.overall.count,
        base: a.overall.acc,
        reranked: b.overall.acc,
        relative: relative_improvement(a.overall.acc, b.overall.acc),
    }];
    for (m, bins) in &a.strata {
        for (bin, acc) in bins {
            let r = b.strata[m][bin];
            rows.push(ImprovementRow {
                metric: Some(*m),
                bin: Some(*bin),
                count: acc.count,
                base: acc.acc,
                reranked: r.acc,
                relative: relative_improvement(acc.acc, r.acc),
            });
        }
    }
    Ok(ImprovementReport {
        base_model: base.name().to_string(),
        k,
        rows,
    })
}

impl ImprovementReport {
    pub fn row(&self, metric: OverlapMetric, bin: OverlapBin) -> Option<&ImprovementRow> {
        self.rows
            .iter()
            .find(|r| r.metric == Some(metric) && r.bin == Some(bin))
    }

    pub fn overall(&self) -> &ImprovementRow {
        &self.rows[0]
    }

    /// CSV: metric, bin, count, base ACC, reranked ACC, relative change.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        let k = self.k;
        w.write_record([
            "metric".to_string(),
            "bin".to_string(),
            "count".to_string(),
            format!("acc@{k}_base"),
            format!("acc@{k}_reranked"),
            "relative".to_string(),
        ])
        .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.metric.map_or("all", |m| m.label()).to_string(),
                r.bin.map_or("all", |b| b.label()).to_string(),
                r.count.to_string(),
                crate::predictors::format_acc(r.base),
                crate::predictors::format_acc(r.reranked),
                format_relative(r.relative),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use crate::laws::VisitationLawModel;
    use crate::predictors::{ground_truth, prediction_tasks};
    use crate::rerank::model::ScorerModel;
    use crate::traj::{LocationId, LocationVocabulary, Trajectory};

    #[test]
    fn relative_formatting() {
        assert_eq!(format_relative(relative_improvement(Some(0.026), Some(0.051))), "+96.15%");
        assert_eq!(format_relative(relative_improvement(Some(0.3), Some(0.3))), "+0.00%");
        assert_eq!(format_relative(relative_improvement(Some(0.5), Some(0.25))), "-50.00%");
        assert_eq!(format_relative(relative_improvement(Some(0.0), Some(0.2))), "undefined");
        assert_eq!(format_relative(relative_improvement(None, None)), "undefined");
    }

    fn fixture() -> (LocationVocabulary, VisitationLawModel, Vec<PredictionTask>, ScoreTable) {
        let mut v = LocationVocabulary::new();
        for i in 0..8 {
            v.intern(&i.to_string(), LatLon::new(0.0, i as f64 * 0.01).unwrap());
        }
        let law = VisitationLawModel::from_parts(1.6, 0.1, vec![1; 8]).unwrap();
        let trajs: Vec<_> = (0..6)
            .map(|i| Trajectory::from_locations(i, "u", &[i as u32 % 8, (i as u32 + 3) % 8]).unwrap())
            .collect();
        let (tasks, _) = prediction_tasks(&trajs);
        let mut s = ScoreTable::new("base", 4);
        for t in &tasks {
            // Ties on purpose, in descending id order.
            s.insert(
                t.trajectory,
                vec![
                    Candidate::new(LocationId(5), 0.4),
                    Candidate::new(LocationId(3), 0.4),
                    Candidate::new(LocationId(1), 0.1),
                    Candidate::new(LocationId(0), 0.1),
                ],
            )
            .unwrap();
        }
        (v, law, tasks, s)
    }

    #[test]
    fn passthrough_reproduces_input_exactly() {
        let (v, law, tasks, s) = fixture();
        let users = BTreeMap::new();
        let ctx = FeatureContext { users: &users, law: &law, vocab: &v };
        let r = rerank(&Scorer::Passthrough, &s, &tasks, &ctx).unwrap();
        for (id, c) in s.iter() {
            assert_eq!(r.get(id).unwrap(), c);
        }
        let rep = evaluate_improvement(&s, &r, &ground_truth(&tasks), 5, None).unwrap();
        assert_eq!(rep.overall().base, rep.overall().reranked);
    }

    #[test]
    fn zero_model_orders_by_location_id() {
        let (v, law, tasks, s) = fixture();
        let users = BTreeMap::new();
        let ctx = FeatureContext { users: &users, law: &law, vocab: &v };
        let r = rerank(&Scorer::Network(ScorerModel::zeros(4)), &s, &tasks, &ctx).unwrap();
        for (_, c) in r.iter() {
            let ids: Vec<u32> = c.iter().map(|c| c.location.0).collect();
            assert_eq!(ids, vec![0, 1, 3, 5]);
        }
        assert_eq!(r.depth(), s.depth());
    }

    #[test]
    fn rerank_is_a_permutation_and_valid_score_file() {
        let (v, law, tasks, s) = fixture();
        let users = BTreeMap::new();
        let ctx = FeatureContext { users: &users, law: &law, vocab: &v };
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let m = ScorerModel::random(8, &mut rng);
        let r = rerank(&Scorer::Network(m), &s, &tasks, &ctx).unwrap();
        for (id, c) in s.iter() {
            let mut a: Vec<_> = c.iter().map(|x| x.location).collect();
            let mut b: Vec<_> = r.get(id).unwrap().iter().map(|x| x.location).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        r.write_jsonl(&p).unwrap();
        assert!(crate::predictors::load_scores(&p).is_ok());
    }

    #[test]
    fn coverage_mismatch_is_rejected() {
        let (_, _, tasks, s) = fixture();
        let mut other = ScoreTable::new("x", 4);
        other.insert(tasks[0].trajectory, vec![]).unwrap();
        assert!(evaluate_improvement(&s, &other, &ground_truth(&tasks), 5, None).is_err());
    }
}
