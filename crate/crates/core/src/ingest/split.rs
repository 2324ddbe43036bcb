//! Per-user temporal train/validation/test split.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::pipeline::{PipelineConfig, StageCounts};
use crate::traj::{LocationVocabulary, Trajectory};

/// Tolerance used when flooring `n * fraction`, so that e.g. `10 * 0.7`
/// yields 7 regardless of representation error.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            valid: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let f = Self { train, valid, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::input(format!("split fractions must be positive: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// `(train, valid, test)` counts for a user with `n` trajectories:
    /// floor for train and validation, remainder to test.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((n as f64) * f + FLOOR_SLACK).floor() as usize;
        let train = floor(self.train).min(n);
        let valid = floor(self.valid).min(n - train);
        (train, valid, n - train - valid)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitParts {
    pub train: Vec<Trajectory>,
    pub valid: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

/// Sorts each user's trajectories by start time and assigns the leading
/// share to train, the next to validation and the rest to test.
pub fn split(trajectories: &[Trajectory], fractions: &SplitFractions) -> Result<SplitParts> {
    fractions.validate()?;
    let mut order: Vec<&str> = Vec::new();
    let mut by_user: HashMap<&str, Vec<&Trajectory>> = HashMap::new();
    for t in trajectories {
        by_user
            .entry(t.user())
            .or_insert_with(|| {
                order.push(t.user());
                Vec::new()
            })
            .push(t);
    }

    let mut parts = SplitParts::default();
    for user in order {
        let mut ts = by_user.remove(user).unwrap_or_default();
        ts.sort_by_key(|t| (t.first_timestamp(), t.last_timestamp()));
        let (n_train, n_valid, _) = fractions.counts(ts.len());
        for (i, t) in ts.into_iter().enumerate() {
            let bucket = if i < n_train {
                &mut parts.train
            } else if i < n_train + n_valid {
                &mut parts.valid
            } else {
                &mut parts.test
            };
            bucket.push(t.clone());
        }
    }
    for list in [&mut parts.train, &mut parts.valid, &mut parts.test] {
        list.sort_by_key(Trajectory::id);
    }
    Ok(parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub users: usize,
    pub locations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Everything needed to reproduce a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub format: String,
    pub source_name: String,
    pub source_sha256: String,
    pub config: PipelineConfig,
    pub split_rounding: String,
    pub rows_rejected: usize,
    pub stages: StageCounts,
    pub counts: SplitCounts,
}

pub const SPLIT_ROUNDING: &str = "per-user floor for train and valid, remainder to test";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Trajectory>,
    pub valid: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub vocabulary: LocationVocabulary,
    pub provenance: Option<Provenance>,
}

impl DatasetSplit {
    pub fn new(parts: SplitParts, vocabulary: LocationVocabulary) -> Result<Self> {
        let s = Self {
            train: parts.train,
            valid: parts.valid,
            test: parts.test,
            vocabulary,
            provenance: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn all(&self) -> impl Iterator<Item = &Trajectory> + '_ {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn counts(&self) -> SplitCounts {
        let users: HashSet<&str> = self.all().map(Trajectory::user).collect();
        SplitCounts {
            users: users.len(),
            locations: self.vocabulary.len(),
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
        }
    }

    /// Disjointness, vocabulary coverage and per-user temporal ordering.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in self.all() {
            if !seen.insert(t.id()) {
                return Err(Error::validation(format!(
                    "trajectory {} appears in more than one split",
                    t.id()
                )));
            }
        }
        self.vocabulary.check_covers(self.all())?;

        #[derive(Default)]
        struct Span {
            train_last: Option<i64>,
            valid_first: Option<i64>,
            valid_last_start: Option<i64>,
            test_first: Option<i64>,
        }
        let mut spans: HashMap<&str, Span> = HashMap::new();
        for t in &self.train {
            let s = spans.entry(t.user()).or_default();
            s.train_last = s.train_last.max(Some(t.last_timestamp()));
        }
        for t in &self.valid {
            let s = spans.entry(t.user()).or_default();
            let f = t.first_timestamp();
            s.valid_first = Some(s.valid_first.map_or(f, |v| v.min(f)));
            s.valid_last_start = s.valid_last_start.max(Some(f));
        }
        for t in &self.test {
            let s = spans.entry(t.user()).or_default();
            let f = t.first_timestamp();
            s.test_first = Some(s.test_first.map_or(f, |v| v.min(f)));
        }
        for (user, s) in &spans {
            let later = [s.valid_first, s.test_first].into_iter().flatten().min();
            if let (Some(a), Some(b)) = (s.train_last, later) {
                if a > b {
                    return Err(Error::validation(format!(
                        "user {user}: training data ends after held-out data starts"
                    )));
                }
            }
            if let (Some(a), Some(b)) = (s.valid_last_start, s.test_first) {
                if a > b {
                    return Err(Error::validation(format!(
                        "user {user}: validation trajectory starts after test data"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{LocationId, Point, TrajectoryId};

    fn user_trajs(user: &str, n: usize, first_id: u64) -> Vec<Trajectory> {
        (0..n)
            .map(|i| {
                let t0 = i as i64 * 1000;
                Trajectory::new(
                    TrajectoryId(first_id + i as u64),
                    user,
                    vec![Point::new(t0, LocationId(0)), Point::new(t0 + 10, LocationId(1))],
                )
                .unwrap()
            })
            .collect()
    }

    fn sizes(p: &SplitParts) -> (usize, usize, usize) {
        (p.train.len(), p.valid.len(), p.test.len())
    }

    #[test]
    fn ten_trajectories_split_seven_one_two() {
        let p = split(&user_trajs("u", 10, 0), &SplitFractions::default()).unwrap();
        assert_eq!(sizes(&p), (7, 1, 2));
    }

    #[test]
    fn single_trajectory_goes_to_test() {
        let p = split(&user_trajs("u", 1, 0), &SplitFractions::default()).unwrap();
        assert_eq!(sizes(&p), (0, 0, 1));
    }

    #[test]
    fn five_trajectories_split_three_zero_two() {
        let p = split(&user_trajs("u", 5, 0), &SplitFractions::default()).unwrap();
        assert_eq!(sizes(&p), (3, 0, 2));
    }

    #[test]
    fn bad_fractions_are_rejected() {
        assert!(SplitFractions::new(0.7, 0.2, 0.2).is_err());
        assert!(SplitFractions::new(0.8, 0.0, 0.2).is_err());
        let bad = SplitFractions {
            train: 0.5,
            valid: 0.1,
            test: 0.1,
        };
        assert!(split(&user_trajs("u", 3, 0), &bad).is_err());
    }

    #[test]
    fn split_is_temporal_per_user() {
        let mut all = user_trajs("a", 10, 0);
        all.extend(user_trajs("b", 7, 10));
        // Shuffle input order; split must sort by time per user.
        all.reverse();
        let p = split(&all, &SplitFractions::default()).unwrap();
        let mut vocab = LocationVocabulary::new();
        let c = crate::geo::LatLon::new(0.0, 0.0).unwrap();
        vocab.intern("x", c);
        vocab.intern("y", c);
        let ds = DatasetSplit::new(p, vocab).unwrap();
        let a_train: Vec<u64> = ds.train.iter().filter(|t| t.user() == "a").map(|t| t.id().0).collect();
        assert_eq!(a_train, (0..7).collect::<Vec<_>>());
        assert_eq!(ds.counts().users, 2);
    }

    #[test]
    fn validation_catches_overlapping_ids_and_time_inversions() {
        let t = user_trajs("a", 2, 0);
        let mut vocab = LocationVocabulary::new();
        let c = crate::geo::LatLon::new(0.0, 0.0).unwrap();
        vocab.intern("x", c);
        vocab.intern("y", c);
        let dup = SplitParts {
            train: vec![t[0].clone()],
            valid: vec![],
            test: vec![t[0].clone()],
        };
        assert!(DatasetSplit::new(dup, vocab.clone()).is_err());
        let inverted = SplitParts {
            train: vec![t[1].clone()],
            valid: vec![],
            test: vec![t[0].clone()],
        };
        assert!(DatasetSplit::new(inverted, vocab).is_err());
    }
}
