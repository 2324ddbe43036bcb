//! Markov baseline reranked with mobility-law features: ACC@5 before and
//! after, per overlap bin, over a few generated corpora.

use traj_overlap::experiment::mmc_rerank_experiment;
use traj_overlap::ingest::{split, DatasetSplit, SplitFractions};
use traj_overlap::predictors::format_acc;
use traj_overlap::rerank::{format_relative, TrainConfig};
use traj_overlap::synth::{generate, SynthConfig};

fn main() -> traj_overlap::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(3, |s| s.parse().expect("seed count"));
    for seed in 1..=seeds {
        let corpus = generate(&SynthConfig { seed, ..Default::default() })?;
        let ds = DatasetSplit::new(split(&corpus.trajectories, &SplitFractions::default())?, corpus.vocabulary)?;
        let (run, _) = mmc_rerank_experiment(&ds, &TrainConfig { seed, ..Default::default() }, 5, 0)?;
        println!("seed {seed}");
        println!("  {:<8}{:<8}{:>6}{:>11}{:>11}{:>11}", "metric", "bin", "n", "MMC", "reranked", "change");
        for r in &run.report.rows {
            println!(
                "  {:<8}{:<8}{:>6}{:>11}{:>11}{:>11}",
                r.metric.map_or("all", |m| m.label()),
                r.bin.map_or("all", |b| b.label()),
                r.count,
                format_acc(r.base),
                format_acc(r.reranked),
                format_relative(r.relative)
            );
        }
    }
    Ok(())
}
