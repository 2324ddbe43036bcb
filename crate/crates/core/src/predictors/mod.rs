//! Markov-chain baseline, external score files, and ACC@k evaluation.

mod eval;
mod mmc;
mod scores;

pub use eval::{
    acc_at_k, format_acc, ground_truth, hit_at_k, prediction_tasks, write_accuracy_table,
    write_accuracy_tidy, Accuracy, EvalReport, GroundTruth, PredictionTask, UNDEFINED,
};
pub use mmc::TransitionMatrix;
pub use scores::{load_scores, Candidate, Coverage, ScoreTable};
