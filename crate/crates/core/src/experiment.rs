//! End-to-end runs over a split: overlap strata, the Markov baseline, and
//! the law-feature reranker.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::ingest::DatasetSplit;
use crate::laws::{fit_gamma, user_features, UserLawFeatures, VisitationLawModel, DEFAULT_GAMMA};
use crate::overlap::{compute_overlaps, stratify, LocationIndex, OverlapMetric, OverlapOptions, Strata};
use crate::predictors::{ground_truth, prediction_tasks, PredictionTask, ScoreTable, TransitionMatrix};
use crate::rerank::{
    build_samples, evaluate_improvement, rerank, train, FeatureContext, ImprovementReport, Scorer,
    TrainConfig, TrainOutcome,
};

/// Overlap strata of the test split against the training split.
pub fn test_strata(
    split: &DatasetSplit,
    metrics: &[OverlapMetric],
    options: OverlapOptions,
    threads: usize,
) -> Result<BTreeMap<OverlapMetric, Strata>> {
    let index = LocationIndex::build(&split.train)?;
    metrics
        .iter()
        .map(|&m| Ok((m, stratify(&compute_overlaps(&split.test, &index, m, options, threads)?)?)))
        .collect()
}

/// Markov chain fit on the training split, ranking the whole vocabulary
/// (or `depth` candidates) for each task.
pub fn mmc_scores(split: &DatasetSplit, tasks: &[PredictionTask], depth: Option<usize>) -> Result<ScoreTable> {
    let m = TransitionMatrix::fit(&split.train)?.with_vocabulary_size(split.vocabulary.len());
    m.score_tasks(tasks, depth.unwrap_or(split.vocabulary.len()))
}

/// Per-user features and the visitation-law model, both from the
/// training split only.
#[derive(Debug, Clone)]
pub struct LawContext {
    pub users: BTreeMap<String, UserLawFeatures>,
    pub law: VisitationLawModel,
}

/// How the visitation-law exponent is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    Fixed(f64),
    Fit,
}

impl Default for GammaChoice {
    fn default() -> Self {
        GammaChoice::Fixed(DEFAULT_GAMMA)
    }
}

impl LawContext {
    pub fn fit(split: &DatasetSplit, gamma: GammaChoice) -> Result<Self> {
        let gamma = match gamma {
            GammaChoice::Fixed(g) => g,
            GammaChoice::Fit => {
                let f = fit_gamma(&split.train, &split.vocabulary);
                if let Some(w) = &f.warning {
                    log::warn!("{w}");
                }
                f.gamma
            }
        };
        Ok(Self {
            users: user_features(&split.train, &split.vocabulary),
            law: VisitationLawModel::fit(&split.train, &split.vocabulary, gamma)?,
        })
    }

    pub fn features<'a>(&'a self, split: &'a DatasetSplit) -> FeatureContext<'a> {
        FeatureContext {
            users: &self.users,
            law: &self.law,
            vocab: &split.vocabulary,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RerankRun {
    pub base: ScoreTable,
    pub reranked: ScoreTable,
    pub training: TrainOutcome,
    pub report: ImprovementReport,
}

/// Trains the reranker on validation-split tasks scored by `base_valid`,
/// applies it to `base_test`, and reports ACC@k per stratum.
#[allow(clippy::too_many_arguments)]
pub fn rerank_experiment(
    split: &DatasetSplit,
    laws: &LawContext,
    base_valid: &ScoreTable,
    base_test: ScoreTable,
    strata: &BTreeMap<OverlapMetric, Strata>,
    config: &TrainConfig,
    k: usize,
) -> Result<RerankRun> {
    let ctx = laws.features(split);
    let (valid_tasks, _) = prediction_tasks(&split.valid);
    let samples = build_samples(base_valid, &valid_tasks, &ctx, config.negatives, config.seed)?;
    let training = train(&samples, config)?;
    let (test_tasks, _) = prediction_tasks(&split.test);
    let reranked = rerank(&Scorer::Network(training.model.clone()), &base_test, &test_tasks, &ctx)?;
    let report = evaluate_improvement(&base_test, &reranked, &ground_truth(&test_tasks), k, Some(strata))?;
    Ok(RerankRun {
        base: base_test,
        reranked,
        training,
        report,
    })
}

/// The whole chain with the Markov baseline as the base predictor.
pub fn mmc_rerank_experiment(
    split: &DatasetSplit,
    config: &TrainConfig,
    k: usize,
    threads: usize,
) -> Result<(RerankRun, BTreeMap<OverlapMetric, Strata>)> {
    let strata = test_strata(split, &OverlapMetric::ALL, OverlapOptions::default(), threads)?;
    let laws = LawContext::fit(split, GammaChoice::default())?;
    let (valid_tasks, _) = prediction_tasks(&split.valid);
    let (test_tasks, _) = prediction_tasks(&split.test);
    let base_valid = mmc_scores(split, &valid_tasks, None)?;
    let base_test = mmc_scores(split, &test_tasks, None)?;
    let run = rerank_experiment(split, &laws, &base_valid, base_test, &strata, config, k)?;
    Ok((run, strata))
}
