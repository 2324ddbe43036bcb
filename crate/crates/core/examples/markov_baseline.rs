//! The Markov-chain baseline: ACC@1 and ACC@5 overall and per LCST bin,
//! plus a round trip through the score-file format external models use.

use traj_overlap::experiment::{mmc_scores, test_strata};
use traj_overlap::ingest::{split, DatasetSplit, SplitFractions};
use traj_overlap::overlap::{OverlapMetric, OverlapOptions};
use traj_overlap::predictors::{acc_at_k, format_acc, ground_truth, load_scores, prediction_tasks};
use traj_overlap::synth::{generate, SynthConfig};

fn main() -> traj_overlap::Result<()> {
    let corpus = generate(&SynthConfig::default())?;
    let ds = DatasetSplit::new(split(&corpus.trajectories, &SplitFractions::default())?, corpus.vocabulary)?;
    let (tasks, skipped) = prediction_tasks(&ds.test);
    println!("{} test tasks ({skipped} single-point trajectories skipped)", tasks.len());

    let scores = mmc_scores(&ds, &tasks, Some(50))?;
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("MMC.jsonl");
    scores.write_jsonl(&path)?;
    let scores = load_scores(&path)?;

    let strata = test_strata(&ds, &[OverlapMetric::Lcst], OverlapOptions::default(), 0)?;
    let truth = ground_truth(&tasks);
    for k in [1, 5] {
        let r = acc_at_k(&scores, &truth, k, Some(&strata))?;
        println!("\nACC@{k} overall {}", format_acc(r.overall.acc));
        for (bin, a) in &r.strata[&OverlapMetric::Lcst] {
            println!("  LCST {:<7} n={:<4} {}", bin.label(), a.count, format_acc(a.acc));
        }
    }
    Ok(())
}
