//! Raw check-ins to a train/valid/test split: user filtering, session
//! cutting at 72 h gaps, and the per-user chronological split.

use traj_overlap::ingest::{build_split, store, PipelineConfig, SourceFormat};
use traj_overlap::synth::{generate, SynthConfig};

fn main() -> traj_overlap::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let csv = dir.path().join("checkins.csv");
    generate(&SynthConfig { users: 40, ..Default::default() })?.write_checkins_csv(&csv)?;

    let config = PipelineConfig::default();
    let split = build_split(&SourceFormat::GenericCsv(Default::default()), &csv, &config)?;
    let prov = split.provenance.as_ref().expect("build_split attaches provenance");
    let s = &prov.stages;
    println!("records in            {}", s.records_in);
    println!("users in              {}", s.users_in);
    println!("after record filter   {} users", s.users_after_record_filter);
    println!("after session cut     {} trajectories", s.trajectories_after_cut);
    println!("final                 {} users, {} locations, {} trajectories", s.users_final, s.locations, s.trajectories_final);
    let c = split.counts();
    println!("split                 train {} / valid {} / test {}", c.train, c.valid, c.test);

    let out = dir.path().join("split");
    store::write_split(&out, &split)?;
    let back = store::read_split(&out)?;
    assert_eq!(back.train, split.train);
    println!("round trip through {} ok", out.display());
    Ok(())
}
