//! Max-over-training aggregation with inverted-index candidate pruning.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::overlap::bins::OverlapBin;
use crate::overlap::metrics::{
    common_suffix_len, jaccard_from_counts, lcs_len, metric_value, JaccardVariant, OverlapMetric,
};
use crate::traj::{LocationId, Trajectory, TrajectoryId};

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapRecord {
    pub test: TrajectoryId,
    pub metric: OverlapMetric,
    pub score: f64,
    pub argmax_train: TrajectoryId,
    pub bin: OverlapBin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapOptions {
    pub jaccard: JaccardVariant,
    /// Use the inverted index to skip training trajectories that cannot
    /// beat the current best. Never changes the result.
    pub prune: bool,
}

impl Default for OverlapOptions {
    fn default() -> Self {
        Self {
            jaccard: JaccardVariant::Similarity,
            prune: true,
        }
    }
}

#[derive(Debug, Clone)]
struct TrainEntry {
    id: TrajectoryId,
    locations: Vec<LocationId>,
    distinct: usize,
}

/// Read-only index over the training trajectories.
///
/// Entries are kept in ascending [`TrajectoryId`] order; postings list, for
/// each location, the entries containing it together with the number of
/// occurrences.
#[derive(Debug, Clone)]
pub struct LocationIndex {
    entries: Vec<TrainEntry>,
    postings: HashMap<LocationId, Vec<(u32, u32)>>,
    by_last: HashMap<LocationId, Vec<u32>>,
}

fn occurrences(locs: &[LocationId]) -> Vec<(LocationId, u32)> {
    let mut counts: HashMap<LocationId, u32> = HashMap::new();
    for &l in locs {
        *counts.entry(l).or_default() += 1;
    }
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_unstable();
    v
}

impl LocationIndex {
    pub fn build(train: &[Trajectory]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::input("cannot index an empty training set"));
        }
        let mut sorted: Vec<&Trajectory> = train.iter().collect();
        sorted.sort_by_key(|t| t.id());
        if sorted.windows(2).any(|w| w[0].id() == w[1].id()) {
            return Err(Error::input("duplicate trajectory id in training set"));
        }
        let mut entries = Vec::with_capacity(sorted.len());
        let mut postings: HashMap<LocationId, Vec<(u32, u32)>> = HashMap::new();
        let mut by_last: HashMap<LocationId, Vec<u32>> = HashMap::new();
        for (idx, t) in sorted.into_iter().enumerate() {
            let locations = t.locations();
            let occ = occurrences(&locations);
            for &(l, c) in &occ {
                postings.entry(l).or_default().push((idx as u32, c));
            }
            by_last.entry(t.last_location()).or_default().push(idx as u32);
            entries.push(TrainEntry {
                id: t.id(),
                distinct: occ.len(),
                locations,
            });
        }
        Ok(Self {
            entries,
            postings,
            by_last,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Training trajectories that contain `location`.
    pub fn containing(&self, location: LocationId) -> impl Iterator<Item = TrajectoryId> + '_ {
        self.postings
            .get(&location)
            .into_iter()
            .flatten()
            .map(|&(i, _)| self.entries[i as usize].id)
    }

    fn lowest_id(&self) -> TrajectoryId {
        self.entries[0].id
    }

    /// Maximum of `metric(test, P)` over all indexed training trajectories
    /// `P`. Ties resolve to the lowest training trajectory id.
    pub fn max_overlap(
        &self,
        test: &Trajectory,
        metric: OverlapMetric,
        options: OverlapOptions,
    ) -> Result<OverlapRecord> {
        let r = test.locations();
        let (score, argmax) = if !options.prune || options.jaccard == JaccardVariant::Distance {
            self.full_scan(&r, metric, options.jaccard)?
        } else {
            match metric {
                OverlapMetric::Js => self.pruned_js(&r),
                OverlapMetric::Lcst => self.pruned_lcst(&r),
                OverlapMetric::Ofe => self.pruned_ofe(&r),
            }
        };
        Ok(OverlapRecord {
            test: test.id(),
            metric,
            score,
            argmax_train: argmax,
            bin: OverlapBin::from_score(score),
        })
    }

    fn full_scan(
        &self,
        r: &[LocationId],
        metric: OverlapMetric,
        variant: JaccardVariant,
    ) -> Result<(f64, TrajectoryId)> {
        let mut best = (0.0, self.lowest_id());
        for e in &self.entries {
            let s = metric_value(metric, r, &e.locations, variant)?;
            if s > best.0 {
                best = (s, e.id);
            }
        }
        Ok(best)
    }

    /// Per-candidate `(shared distinct locations, Σ min occurrences)` for
    /// every entry sharing at least one location with `r`, in entry order.
    fn shared_counts(&self, r_occ: &[(LocationId, u32)]) -> Vec<(u32, u32, u32)> {
        let mut acc: HashMap<u32, (u32, u32)> = HashMap::new();
        for &(l, c_r) in r_occ {
            if let Some(list) = self.postings.get(&l) {
                for &(idx, c_p) in list {
                    let e = acc.entry(idx).or_default();
                    e.0 += 1;
                    e.1 += c_r.min(c_p);
                }
            }
        }
        let mut v: Vec<_> = acc.into_iter().map(|(i, (a, b))| (i, a, b)).collect();
        v.sort_unstable_by_key(|x| x.0);
        v
    }

    fn pruned_js(&self, r: &[LocationId]) -> (f64, TrajectoryId) {
        let occ = occurrences(r);
        let mut best = (0.0, self.lowest_id());
        for (idx, inter, _) in self.shared_counts(&occ) {
            let e = &self.entries[idx as usize];
            let s = jaccard_from_counts(JaccardVariant::Similarity, occ.len(), e.distinct, inter as usize);
            if s > best.0 {
                best = (s, e.id);
            }
        }
        best
    }

    fn pruned_lcst(&self, r: &[LocationId]) -> (f64, TrajectoryId) {
        let occ = occurrences(r);
        let n = r.len() as f64;
        let mut best = (0.0, self.lowest_id());
        for (idx, _, bound) in self.shared_counts(&occ) {
            // The LCS cannot exceed the multiset intersection size.
            if bound as f64 / n <= best.0 {
                continue;
            }
            let e = &self.entries[idx as usize];
            let s = lcs_len(&e.locations, r) as f64 / n;
            if s > best.0 {
                best = (s, e.id);
            }
        }
        best
    }

    fn pruned_ofe(&self, r: &[LocationId]) -> (f64, TrajectoryId) {
        let n = r.len() as f64;
        let mut best = (0.0, self.lowest_id());
        let Some(cands) = r.last().and_then(|l| self.by_last.get(l)) else {
            return best;
        };
        for &idx in cands {
            let e = &self.entries[idx as usize];
            let s = common_suffix_len(r, &e.locations) as f64 / n;
            if s > best.0 {
                best = (s, e.id);
            }
        }
        best
    }
}

/// Max-overlap records for every test trajectory, sorted by test id.
///
/// `threads = 0` uses rayon's default pool size. Output does not depend on
/// the thread count.
pub fn compute_overlaps(
    test: &[Trajectory],
    index: &LocationIndex,
    metric: OverlapMetric,
    options: OverlapOptions,
    threads: usize,
) -> Result<Vec<OverlapRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::pipeline(format!("thread pool: {e}")))?;
    let mut records = pool.install(|| {
        test.par_iter()
            .map(|t| index.max_overlap(t, metric, options))
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by_key(|r| r.test);
    Ok(records)
}
