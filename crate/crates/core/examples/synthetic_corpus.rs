//! Writes a law-driven synthetic check-in file usable with
//! `traj-overlap preprocess --format generic-csv`.
//!
//!     cargo run --example synthetic_corpus -- checkins.csv [seed]

use traj_overlap::synth::{generate, SynthConfig};

fn main() -> traj_overlap::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "synthetic_checkins.csv".into());
    let seed = args.next().map_or(1, |s| s.parse().expect("seed must be an integer"));
    let corpus = generate(&SynthConfig { seed, ..Default::default() })?;
    corpus.write_checkins_csv(path.as_ref())?;
    let points: usize = corpus.trajectories.iter().map(|t| t.len()).sum();
    println!(
        "wrote {path}: {} trajectories, {points} check-ins, {} venues",
        corpus.trajectories.len(),
        corpus.vocabulary.len()
    );
    Ok(())
}
