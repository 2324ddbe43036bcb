//! Per-user mobility features and the visitation law on a synthetic
//! corpus whose moves follow a power law with exponent 1.6.

use traj_overlap::ingest::{split, DatasetSplit, SplitFractions};
use traj_overlap::laws::{fit_gamma, user_features, Profile, VisitationLawModel, DEFAULT_GAMMA};
use traj_overlap::synth::{generate, SynthConfig};

fn main() -> traj_overlap::Result<()> {
    let corpus = generate(&SynthConfig::default())?;
    let ds = DatasetSplit::new(split(&corpus.trajectories, &SplitFractions::default())?, corpus.vocabulary)?;

    let feats = user_features(&ds.train, &ds.vocabulary);
    let explorers = feats.values().filter(|f| f.re_u == Profile::Explorer as u8).count();
    println!("{} users, {explorers} explorers", feats.len());
    for (u, f) in feats.iter().take(5) {
        println!("  {u}: dist {:.2} km, r_g {:.2} km, r_g2 {:.2} km, re {}", f.dist_u, f.r_g, f.r_g2, f.re_u);
    }

    let fit = fit_gamma(&ds.train, &ds.vocabulary);
    println!("\nsparse corpus: gamma {:.3} from {} tuples (fallback: {})", fit.gamma, fit.tuples, fit.fallback);
    // Repeated transitions are needed for a fit; a small dense city has them.
    let dense = generate(&SynthConfig { locations: 40, p_return: 0.0, trajectories_per_user: 40, ..Default::default() })?;
    let fit = fit_gamma(&dense.trajectories, &dense.vocabulary);
    println!("dense corpus:  gamma {:.3} from {} tuples (fallback: {})", fit.gamma, fit.tuples, fit.fallback);

    let law = VisitationLawModel::fit(&ds.train, &ds.vocabulary, DEFAULT_GAMMA)?;
    println!("r_min {:.4} km", law.r_min_km());
    let anchor = ds.test[0].last_location();
    let top = law.top_n(anchor, 5, &ds.vocabulary)?;
    println!("top-5 law locations from {anchor}: {:?}", top.ids);
    Ok(())
}
