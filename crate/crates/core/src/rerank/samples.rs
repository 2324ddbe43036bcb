//! Labeled (trajectory, candidate) feature vectors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{UserLawFeatures, VisitationLawModel};
use crate::predictors::{PredictionTask, ScoreTable};
use crate::traj::{LocationId, LocationVocabulary, TrajectoryId};

pub const FEATURES: usize = 8;
/// Number of law-ranked locations turned into match indicators.
pub const LAW_TOP: usize = 5;

pub const FEATURE_NAMES: [&str; FEATURES] = [
    "nl_score", "dist_u", "top1", "top2", "top3", "top4", "top5", "re_u",
];

pub type FeatureVector = [f64; FEATURES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankSample {
    #[serde(rename = "traj")]
    pub trajectory: TrajectoryId,
    #[serde(rename = "cand")]
    pub candidate: LocationId,
    pub features: FeatureVector,
    pub label: u8,
}

/// Everything needed to featurize a candidate apart from the predictor's
/// own score.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub users: &'a BTreeMap<String, UserLawFeatures>,
    pub law: &'a VisitationLawModel,
    pub vocab: &'a LocationVocabulary,
}

/// Per-trajectory featurizer: user features and the law's top locations
/// for the anchor are looked up once.
#[derive(Debug, Clone)]
pub struct TrajectoryFeaturizer {
    user: UserLawFeatures,
    top: Vec<LocationId>,
}

impl TrajectoryFeaturizer {
    pub fn new(ctx: &FeatureContext<'_>, task: &PredictionTask) -> Result<Self> {
        // Users with no training history get neutral features.
        let user = ctx.users.get(task.user()).copied().unwrap_or_default();
        let top = ctx.law.top_n(task.anchor(), LAW_TOP, ctx.vocab)?.ids;
        Ok(Self { user, top })
    }

    pub fn features(&self, nl_score: f64, candidate: LocationId) -> FeatureVector {
        let mut f = [0.0; FEATURES];
        f[0] = nl_score;
        f[1] = self.user.dist_u;
        for (i, &l) in self.top.iter().enumerate() {
            f[2 + i] = (l == candidate) as u8 as f64;
        }
        f[7] = self.user.re_u as f64;
        f
    }
}

/// Positive plus `negatives` uniformly drawn wrong locations for every
/// task. Each trajectory draws from its own ChaCha stream, so the result
/// does not depend on thread scheduling.
pub fn build_samples(
    scores: &ScoreTable,
    tasks: &[PredictionTask],
    ctx: &FeatureContext<'_>,
    negatives: usize,
    seed: u64,
) -> Result<Vec<RerankSample>> {
    if negatives == 0 {
        return Err(Error::input("negatives per positive must be at least 1"));
    }
    let vocab_len = ctx.vocab.len();
    let mut sorted: Vec<&PredictionTask> = tasks.iter().collect();
    sorted.sort_by_key(|t| t.trajectory);

    let per_traj: Vec<Result<Vec<RerankSample>>> = sorted
        .par_iter()
        .map(|task| {
            let ranked = scores.get(task.trajectory).ok_or_else(|| {
                Error::validation(format!("no scores for trajectory {}", task.trajectory))
            })?;
            if !ctx.vocab.contains(task.target) {
                return Err(Error::validation(format!(
                    "trajectory {}: target {} not in vocabulary",
                    task.trajectory, task.target
                )));
            }
            let nl: BTreeMap<LocationId, f64> =
                ranked.iter().map(|c| (c.location, c.score)).collect();
            let fz = TrajectoryFeaturizer::new(ctx, task)?;
            let sample = |cand: LocationId, label: u8| RerankSample {
                trajectory: task.trajectory,
                candidate: cand,
                features: fz.features(nl.get(&cand).copied().unwrap_or(0.0), cand),
                label,
            };

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(task.trajectory.0);
            let pool = vocab_len - 1;
            let truth = task.target.0 as usize;
            let mut picks: Vec<usize> = if pool <= negatives {
                (0..pool).collect()
            } else {
                index::sample(&mut rng, pool, negatives).into_vec()
            };
            picks.sort_unstable();
            let mut out = Vec::with_capacity(picks.len() + 1);
            out.push(sample(task.target, 1));
            for i in picks {
                let l = if i < truth { i } else { i + 1 };
                out.push(sample(LocationId(l as u32), 0));
            }
            Ok(out)
        })
        .collect();

    let mut out = Vec::new();
    for r in per_traj {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_samples(path: &Path, samples: &[RerankSample]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<Vec<RerankSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: RerankSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if s.label > 1 || s.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "label must be 0/1 and features finite".into(),
            });
        }
        out.push(s);
    }
    Ok(out)
}
