//! Reranking a predictor's candidate lists with mobility-law features.

mod apply;
mod model;
mod samples;
mod train;

pub use apply::{
    evaluate_improvement, format_relative, relative_improvement, rerank, ImprovementReport,
    ImprovementRow,
};
pub use model::{SavedScorer, Scorer, ScorerModel, DEFAULT_HIDDEN};
pub use samples::{
    build_samples, read_samples, write_samples, FeatureContext, FeatureVector, RerankSample,
    TrajectoryFeaturizer, FEATURES, FEATURE_NAMES, LAW_TOP,
};
pub use train::{train, EpochLoss, TrainConfig, TrainOutcome, MAX_RESTARTS};
