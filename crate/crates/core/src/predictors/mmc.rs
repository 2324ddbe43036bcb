//! First-order mobility Markov chain over locations.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::predictors::eval::PredictionTask;
use crate::predictors::scores::{Candidate, ScoreTable};
use crate::traj::{LocationId, Trajectory};

#[derive(Debug, Clone, PartialEq)]
struct Row {
    total: u64,
    /// Successors ranked by count (descending), then id.
    next: Vec<(LocationId, u64)>,
}

/// Transition counts between consecutive locations of training
/// trajectories, plus a global popularity fallback for unseen states.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: BTreeMap<LocationId, Row>,
    /// All known locations ranked by visit count (descending), then id.
    fallback: Vec<(LocationId, u64)>,
    visits_total: u64,
}

fn ranked(counts: BTreeMap<LocationId, u64>) -> Vec<(LocationId, u64)> {
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

impl TransitionMatrix {
    pub fn fit(train: &[Trajectory]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::input("cannot fit a Markov chain on an empty training set"));
        }
        let mut pairs: BTreeMap<LocationId, BTreeMap<LocationId, u64>> = BTreeMap::new();
        let mut visits: BTreeMap<LocationId, u64> = BTreeMap::new();
        for t in train {
            for p in t.points() {
                *visits.entry(p.location).or_default() += 1;
            }
            for w in t.points().windows(2) {
                *pairs
                    .entry(w[0].location)
                    .or_default()
                    .entry(w[1].location)
                    .or_default() += 1;
            }
        }
        let rows = pairs
            .into_iter()
            .map(|(a, succ)| {
                let total = succ.values().sum();
                (a, Row { total, next: ranked(succ) })
            })
            .collect();
        let visits_total = visits.values().sum();
        Ok(Self {
            rows,
            fallback: ranked(visits),
            visits_total,
        })
    }

    /// Appends never-visited vocabulary ids to the fallback ranking with
    /// zero probability, so that rankings can cover the whole vocabulary.
    pub fn with_vocabulary_size(mut self, size: usize) -> Self {
        let known: std::collections::HashSet<LocationId> =
            self.fallback.iter().map(|&(l, _)| l).collect();
        self.fallback.extend(
            (0..size as u32)
                .map(LocationId)
                .filter(|l| !known.contains(l))
                .map(|l| (l, 0)),
        );
        self
    }

    pub fn count(&self, from: LocationId, to: LocationId) -> u64 {
        self.rows
            .get(&from)
            .and_then(|r| r.next.iter().find(|(l, _)| *l == to))
            .map_or(0, |&(_, c)| c)
    }

    pub fn row_total(&self, from: LocationId) -> u64 {
        self.rows.get(&from).map_or(0, |r| r.total)
    }

    pub fn has_row(&self, from: LocationId) -> bool {
        self.rows.contains_key(&from)
    }

    /// `P(to | from)`; zero when `from` was never a source.
    pub fn probability(&self, from: LocationId, to: LocationId) -> f64 {
        match self.rows.get(&from) {
            Some(r) => self.count(from, to) as f64 / r.total as f64,
            None => 0.0,
        }
    }

    /// Sum of each row's probabilities, keyed by source.
    pub fn row_sums(&self) -> BTreeMap<LocationId, f64> {
        self.rows
            .iter()
            .map(|(&a, r)| {
                (
                    a,
                    r.next.iter().map(|&(_, c)| c as f64 / r.total as f64).sum(),
                )
            })
            .collect()
    }

    pub fn sources(&self) -> impl Iterator<Item = LocationId> + '_ {
        self.rows.keys().copied()
    }

    pub fn fallback_probability(&self, l: LocationId) -> f64 {
        self.fallback
            .iter()
            .find(|(x, _)| *x == l)
            .map_or(0.0, |&(_, c)| c as f64 / self.visits_total as f64)
    }

    /// Ranks candidates for the location after `current`'s last point.
    ///
    /// The last location's row comes first, ordered by probability. The
    /// list is then padded from the popularity fallback, skipping ids
    /// already ranked, up to `depth`. Padded scores are the fallback
    /// probability scaled by the smallest row probability (1 when the row
    /// is absent) so that scores stay non-increasing.
    pub fn score(&self, current: &Trajectory, depth: usize) -> Vec<Candidate> {
        let last = current.last_location();
        let mut out: Vec<Candidate> = Vec::with_capacity(depth);
        let mut scale = 1.0;
        if let Some(row) = self.rows.get(&last) {
            for &(l, c) in row.next.iter().take(depth) {
                out.push(Candidate::new(l, c as f64 / row.total as f64));
            }
            scale = out.last().map_or(1.0, |c| c.score);
        }
        if out.len() < depth {
            let ranked: std::collections::HashSet<LocationId> =
                out.iter().map(|c| c.location).collect();
            for &(l, c) in &self.fallback {
                if out.len() >= depth {
                    break;
                }
                if ranked.contains(&l) {
                    continue;
                }
                out.push(Candidate::new(l, scale * c as f64 / self.visits_total as f64));
            }
        }
        out
    }

    /// Scores every task's prefix.
    pub fn score_tasks(&self, tasks: &[PredictionTask], depth: usize) -> Result<ScoreTable> {
        let rows: Vec<_> = tasks
            .par_iter()
            .map(|t| (t.trajectory, self.score(&t.prefix, depth)))
            .collect();
        let mut table = ScoreTable::new("MMC", depth);
        for (id, cands) in rows {
            table.insert(id, cands)?;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: u64, locs: &[u32]) -> Trajectory {
        Trajectory::from_locations(id, "u", locs).unwrap()
    }

    const A: LocationId = LocationId(0);
    const B: LocationId = LocationId(1);
    const C: LocationId = LocationId(2);

    #[test]
    fn alternating_trajectory() {
        let m = TransitionMatrix::fit(&[t(0, &[0, 1, 0, 1])]).unwrap();
        assert_eq!(m.probability(A, B), 1.0);
        assert_eq!(m.probability(B, A), 1.0);
        assert_eq!(m.count(A, B), 2);
        let ranked = m.score(&t(1, &[1, 0]), 5);
        assert_eq!(ranked[0], Candidate::new(B, 1.0));
    }

    #[test]
    fn branching_source() {
        let m = TransitionMatrix::fit(&[t(0, &[0, 1]), t(1, &[0, 2])]).unwrap();
        assert_eq!(m.probability(A, B), 0.5);
        assert_eq!(m.probability(A, C), 0.5);
        assert!(!m.has_row(B));
        assert!(m.row_sums().values().all(|s| (s - 1.0).abs() < 1e-9));
    }

    #[test]
    fn unseen_state_falls_back_to_popularity() {
        let m = TransitionMatrix::fit(&[t(0, &[0, 1, 1, 2, 1]), t(1, &[2, 2])]).unwrap();
        // visits: a=1, b=3, c=3
        let ranked = m.score(&t(5, &[7]), 5);
        let order: Vec<_> = ranked.iter().map(|c| c.location).collect();
        assert_eq!(order, vec![B, C, A]);
        assert_eq!(ranked[0].score, 3.0 / 7.0);
    }

    #[test]
    fn padding_is_monotone_and_excludes_ranked() {
        let m = TransitionMatrix::fit(&[t(0, &[0, 1, 2, 2, 2, 2])])
            .unwrap()
            .with_vocabulary_size(5);
        let ranked = m.score(&t(5, &[0]), 10);
        let order: Vec<_> = ranked.iter().map(|c| c.location.0).collect();
        assert_eq!(order, vec![1, 2, 0, 3, 4]);
        assert!(ranked.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(ranked[4].score, 0.0);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(TransitionMatrix::fit(&[]).is_err());
    }
}
