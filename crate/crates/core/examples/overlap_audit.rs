//! Test-train overlap audit: the three metrics on a toy pair, then the
//! bin fractions of a synthetic split with and without index pruning.

use std::time::Instant;

use traj_overlap::experiment::test_strata;
use traj_overlap::ingest::{split, DatasetSplit, SplitFractions};
use traj_overlap::overlap::{js, lcst, ofe, OverlapBin, OverlapMetric, OverlapOptions};
use traj_overlap::synth::{generate, SynthConfig};
use traj_overlap::traj::LocationId;

fn ids(v: &[u32]) -> Vec<LocationId> {
    v.iter().copied().map(LocationId).collect()
}

fn main() -> traj_overlap::Result<()> {
    let test = ids(&[1, 2, 3, 4, 5]);
    let train = ids(&[9, 2, 3, 7, 4, 5]);
    println!("test  {test:?}\ntrain {train:?}");
    println!("JS   {:.3}", js(&test, &train)?);
    println!("LCST {:.3}", lcst(&test, &train)?);
    println!("OFE  {:.3}", ofe(&test, &train)?);

    let corpus = generate(&SynthConfig::default())?;
    let parts = split(&corpus.trajectories, &SplitFractions::default())?;
    let ds = DatasetSplit::new(parts, corpus.vocabulary)?;
    for prune in [true, false] {
        let t = Instant::now();
        let strata = test_strata(&ds, &OverlapMetric::ALL, OverlapOptions { prune, ..Default::default() }, 0)?;
        println!("\nprune={prune} ({:.2?})", t.elapsed());
        print!("{:<6}", "");
        for b in OverlapBin::ALL {
            print!("{:>8}", b.label());
        }
        println!();
        for (m, s) in &strata {
            print!("{:<6}", m.label());
            for f in s.fractions().values() {
                print!("{f:>8.3}");
            }
            println!();
        }
    }
    Ok(())
}
