//! Visitation law: the chance of moving to a location decays as a power
//! of `r * f`, with `r` the distance from the anchor and `f` the
//! location's visit count.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::geo::{haversine, LatLon, EARTH_RADIUS_KM};
use crate::ingest::store::{read_json, write_json};
use crate::traj::{LocationId, LocationVocabulary, Trajectory};

pub const DEFAULT_GAMMA: f64 = 1.6;

/// Used when no two vocabulary locations are apart.
pub const FALLBACK_R_MIN_KM: f64 = 0.01;

/// Minimum number of `(r, f, frequency)` tuples for a gamma fit.
pub const MIN_FIT_TUPLES: usize = 30;

/// Transitions observed fewer times are left out of the gamma fit; their
/// log frequencies are too noisy.
const MIN_PAIR_COUNT: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct VisitationLawModel {
    gamma: f64,
    r_min_km: f64,
    visit_counts: Vec<u64>,
}

/// Visits per vocabulary location over `train`.
pub fn visit_counts(train: &[Trajectory], vocab: &LocationVocabulary) -> Vec<u64> {
    let mut counts = vec![0u64; vocab.len()];
    for t in train {
        for p in t.points() {
            counts[p.location.index()] += 1;
        }
    }
    counts
}

/// Half the median distance from each location to its nearest distinct
/// neighbour. Coincident locations are skipped.
pub fn r_min_from_vocabulary(vocab: &LocationVocabulary) -> f64 {
    let mut pts: Vec<LatLon> = vocab.iter().map(|(_, l)| l.coord).collect();
    pts.sort_by(|a, b| a.lat().total_cmp(&b.lat()).then(a.lon().total_cmp(&b.lon())));
    let km_per_rad = EARTH_RADIUS_KM;
    let mut nearest: Vec<f64> = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        let mut best = f64::INFINITY;
        // Walk outward in latitude order; the latitude gap bounds distance.
        for dir in [-1isize, 1] {
            let mut j = i as isize + dir;
            while j >= 0 && (j as usize) < pts.len() {
                let q = pts[j as usize];
                let lat_gap = (q.lat() - pts[i].lat()).abs().to_radians() * km_per_rad;
                if lat_gap >= best {
                    break;
                }
                let d = haversine(pts[i], q);
                if d > 0.0 && d < best {
                    best = d;
                }
                j += dir;
            }
        }
        if best.is_finite() {
            nearest.push(best);
        }
    }
    if nearest.is_empty() {
        return FALLBACK_R_MIN_KM;
    }
    nearest.sort_by(f64::total_cmp);
    let n = nearest.len();
    let median = if n % 2 == 1 {
        nearest[n / 2]
    } else {
        (nearest[n / 2 - 1] + nearest[n / 2]) / 2.0
    };
    median / 2.0
}

/// Top-`n` law locations, flagged when the vocabulary had fewer than `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopLocations {
    pub ids: Vec<LocationId>,
    pub truncated: bool,
}

impl VisitationLawModel {
    /// Visit counts from `train`; `r_min` from the vocabulary geometry.
    pub fn fit(train: &[Trajectory], vocab: &LocationVocabulary, gamma: f64) -> Result<Self> {
        Self::from_parts(gamma, r_min_from_vocabulary(vocab), visit_counts(train, vocab))
    }

    pub fn from_parts(gamma: f64, r_min_km: f64, visit_counts: Vec<u64>) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::input(format!("gamma must be positive, got {gamma}")));
        }
        if !(r_min_km.is_finite() && r_min_km > 0.0) {
            return Err(Error::input(format!("r_min must be positive, got {r_min_km}")));
        }
        Ok(Self {
            gamma,
            r_min_km,
            visit_counts,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_min_km(&self) -> f64 {
        self.r_min_km
    }

    pub fn visit_counts(&self) -> &[u64] {
        &self.visit_counts
    }

    /// Visit count with unseen locations smoothed to 1.
    pub fn frequency(&self, l: LocationId) -> f64 {
        self.visit_counts.get(l.index()).copied().unwrap_or(0).max(1) as f64
    }

    fn log_weight(&self, anchor: LatLon, l: LocationId, vocab: &LocationVocabulary) -> f64 {
        let r = haversine(anchor, vocab.coord(l)).max(self.r_min_km);
        -self.gamma * (r * self.frequency(l)).ln()
    }

    fn check(&self, ids: impl IntoIterator<Item = LocationId>, vocab: &LocationVocabulary) -> Result<()> {
        for l in ids {
            if !vocab.contains(l) {
                return Err(Error::input(format!("location {l} not in vocabulary")));
            }
        }
        Ok(())
    }

    /// `μ / (r f)^γ` for each candidate, with `μ` normalizing the scores to
    /// sum to one over `candidates`.
    pub fn scores(
        &self,
        anchor: LocationId,
        candidates: &[LocationId],
        vocab: &LocationVocabulary,
    ) -> Result<Vec<(LocationId, f64)>> {
        self.check(std::iter::once(anchor).chain(candidates.iter().copied()), vocab)?;
        let a = vocab.coord(anchor);
        let logs: Vec<f64> = candidates.iter().map(|&c| self.log_weight(a, c, vocab)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(candidates
            .iter()
            .zip(weights)
            .map(|(&c, w)| (c, w / total))
            .collect())
    }

    /// The `n` most probable locations over the whole vocabulary, ties
    /// to the lower id.
    pub fn top_n(&self, anchor: LocationId, n: usize, vocab: &LocationVocabulary) -> Result<TopLocations> {
        self.check([anchor], vocab)?;
        let a = vocab.coord(anchor);
        let mut best: Vec<(f64, LocationId)> = Vec::with_capacity(n + 1);
        for l in vocab.ids() {
            let w = self.log_weight(a, l, vocab);
            // `best` is sorted by weight descending, then id ascending.
            if best.len() == n && best.last().is_some_and(|&(bw, _)| w <= bw) {
                continue;
            }
            let pos = best.partition_point(|&(bw, bl)| bw > w || (bw == w && bl < l));
            best.insert(pos, (w, l));
            best.truncate(n);
        }
        Ok(TopLocations {
            ids: best.into_iter().map(|(_, l)| l).collect(),
            truncated: vocab.len() < n,
        })
    }

    pub fn saved(&self) -> SavedLawModel {
        SavedLawModel {
            gamma: self.gamma,
            r_min_km: self.r_min_km,
            locations: self.visit_counts.len(),
            visit_count_digest: counts_digest(&self.visit_counts),
        }
    }
}

fn counts_digest(counts: &[u64]) -> String {
    let bytes: Vec<u8> = counts.iter().flat_map(|c| c.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

/// `law_model.json`. Visit counts are recomputed from the training split
/// on load and checked against the digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedLawModel {
    pub gamma: f64,
    pub r_min_km: f64,
    pub locations: usize,
    pub visit_count_digest: String,
}

impl SavedLawModel {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn restore(&self, train: &[Trajectory], vocab: &LocationVocabulary) -> Result<VisitationLawModel> {
        let counts = visit_counts(train, vocab);
        if counts.len() != self.locations || counts_digest(&counts) != self.visit_count_digest {
            return Err(Error::validation(
                "law model visit counts do not match the training split",
            ));
        }
        VisitationLawModel::from_parts(self.gamma, self.r_min_km, counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma: f64,
    pub tuples: usize,
    /// True when the fit was degenerate and [`DEFAULT_GAMMA`] was returned.
    pub fallback: bool,
    pub warning: Option<String>,
}

impl GammaFit {
    fn fallback(tuples: usize, why: String) -> Self {
        log::warn!("gamma fit: {why}; using {DEFAULT_GAMMA}");
        Self {
            gamma: DEFAULT_GAMMA,
            tuples,
            fallback: true,
            warning: Some(why),
        }
    }
}

/// Fits gamma with visit counts taken from `train` itself.
pub fn fit_gamma(train: &[Trajectory], vocab: &LocationVocabulary) -> GammaFit {
    let counts = visit_counts(train, vocab);
    fit_gamma_with_counts(train, vocab, &counts, r_min_from_vocabulary(vocab))
}

/// Least-squares gamma in log-log space.
///
/// For each anchor `a` and distinct successor `c != a` observed at least a
/// few times, the empirical next-visit frequency `n(a→c) / n(a→·)` is
/// regressed on `r(a, c) * f(c)` in log-log space with a per-anchor
/// intercept (absorbing the normalizer `μ`), weighting each tuple by its
/// count. Gamma is the negated slope.
pub fn fit_gamma_with_counts(
    train: &[Trajectory],
    vocab: &LocationVocabulary,
    counts: &[u64],
    r_min_km: f64,
) -> GammaFit {
    let mut transitions: BTreeMap<LocationId, HashMap<LocationId, u64>> = BTreeMap::new();
    for t in train {
        for w in t.points().windows(2) {
            let (a, c) = (w[0].location, w[1].location);
            if a != c {
                *transitions.entry(a).or_default().entry(c).or_default() += 1;
            }
        }
    }

    // Weighted within-anchor sums.
    let (mut sxy, mut sxx, mut tuples) = (0.0, 0.0, 0usize);
    for (a, succ) in &transitions {
        let total: u64 = succ.values().sum();
        let pts: Vec<(f64, f64, f64)> = succ
            .iter()
            .filter(|(_, &n)| n >= MIN_PAIR_COUNT)
            .map(|(&c, &n)| {
                let r = haversine(vocab.coord(*a), vocab.coord(c)).max(r_min_km);
                let f = counts.get(c.index()).copied().unwrap_or(0).max(1) as f64;
                ((r * f).ln(), (n as f64 / total as f64).ln(), n as f64)
            })
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let w: f64 = pts.iter().map(|p| p.2).sum();
        let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
        let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
        for &(x, y, wt) in &pts {
            sxy += wt * (x - mx) * (y - my);
            sxx += wt * (x - mx) * (x - mx);
        }
        tuples += pts.len();
    }

    if tuples < MIN_FIT_TUPLES {
        return GammaFit::fallback(tuples, format!("only {tuples} usable (r, f) tuples"));
    }
    if sxx <= 1e-12 {
        return GammaFit::fallback(tuples, "all r*f values are equal".into());
    }
    let gamma = -sxy / sxx;
    if !(gamma.is_finite() && gamma > 0.0) {
        return GammaFit::fallback(tuples, format!("non-positive fitted exponent {gamma}"));
    }
    let warning = (!(0.5..=3.0).contains(&gamma)).then(|| {
        let w = format!("fitted gamma {gamma:.3} outside the usual [0.5, 3.0]");
        log::warn!("{w}");
        w
    });
    GammaFit {
        gamma,
        tuples,
        fallback: false,
        warning,
    }
}
