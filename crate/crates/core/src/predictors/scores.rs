//! Ranked candidate lists and the JSON Lines score-file format:
//!
//! ```text
//! {"traj":12,"cand":[4,9,1],"score":[0.5,0.25,0.25]}
//! ```
//!
//! One object per trajectory, arrays of equal length, scores
//! non-increasing, LF line endings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{LocationId, TrajectoryId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub location: LocationId,
    pub score: f64,
}

impl Candidate {
    pub fn new(location: LocationId, score: f64) -> Self {
        Self { location, score }
    }
}

/// Per-trajectory ranked candidates from one predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    name: String,
    depth: usize,
    rows: BTreeMap<TrajectoryId, Vec<Candidate>>,
}

/// Which expected trajectories a table lacks, and which it has in excess.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Coverage {
    pub missing: Vec<TrajectoryId>,
    pub unexpected: Vec<TrajectoryId>,
}

impl Coverage {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty()
    }
}

fn check_ranking(id: TrajectoryId, cands: &[Candidate]) -> std::result::Result<(), String> {
    let mut seen = BTreeSet::new();
    for (i, c) in cands.iter().enumerate() {
        if !c.score.is_finite() {
            return Err(format!("trajectory {id}: non-finite score at rank {}", i + 1));
        }
        if !seen.insert(c.location) {
            return Err(format!("trajectory {id}: duplicate candidate {}", c.location));
        }
        if i > 0 && c.score > cands[i - 1].score {
            return Err(format!(
                "trajectory {id}: scores not non-increasing at rank {} ({} after {})",
                i + 1,
                c.score,
                cands[i - 1].score
            ));
        }
    }
    Ok(())
}

impl ScoreTable {
    pub fn new(name: impl Into<String>, depth: usize) -> Self {
        Self {
            name: name.into(),
            depth,
            rows: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn insert(&mut self, id: TrajectoryId, candidates: Vec<Candidate>) -> Result<()> {
        check_ranking(id, &candidates).map_err(Error::validation)?;
        if self.rows.contains_key(&id) {
            return Err(Error::validation(format!("duplicate trajectory {id}")));
        }
        self.depth = self.depth.max(candidates.len());
        self.rows.insert(id, candidates);
        Ok(())
    }

    pub fn get(&self, id: TrajectoryId) -> Option<&[Candidate]> {
        self.rows.get(&id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = TrajectoryId> + '_ {
        self.rows.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TrajectoryId, &[Candidate])> + '_ {
        self.rows.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// 1-based rank of `location` for trajectory `id`, if listed.
    pub fn rank_of(&self, id: TrajectoryId, location: LocationId) -> Option<usize> {
        self.get(id)?
            .iter()
            .position(|c| c.location == location)
            .map(|p| p + 1)
    }

    pub fn coverage<I: IntoIterator<Item = TrajectoryId>>(&self, expected: I) -> Coverage {
        let expected: BTreeSet<TrajectoryId> = expected.into_iter().collect();
        Coverage {
            missing: expected.iter().filter(|id| !self.rows.contains_key(id)).copied().collect(),
            unexpected: self.rows.keys().filter(|id| !expected.contains(id)).copied().collect(),
        }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, cands) in &self.rows {
            let line = ScoreLine {
                traj: id.0,
                cand: cands.iter().map(|c| c.location.0).collect(),
                score: cands.iter().map(|c| c.score).collect(),
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| Error::io(path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreLine {
    traj: u64,
    cand: Vec<u32>,
    score: Vec<f64>,
}

/// Reads a score file. The table is named after the file stem.
pub fn load_scores(path: &Path) -> Result<ScoreTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scores".into());
    let mut table = ScoreTable::new(name, 0);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if rec.cand.len() != rec.score.len() {
            return Err(err(format!(
                "{} candidates but {} scores",
                rec.cand.len(),
                rec.score.len()
            )));
        }
        let id = TrajectoryId(rec.traj);
        let cands = rec
            .cand
            .iter()
            .zip(&rec.score)
            .map(|(&l, &s)| Candidate::new(LocationId(l), s))
            .collect();
        table.insert(id, cands).map_err(|e| err(e.to_string()))?;
    }
    if table.depth < 5 {
        log::warn!("{}: candidate depth {} is below 5", path.display(), table.depth);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(s: &str) -> Result<ScoreTable> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rnn.jsonl");
        fs::write(&p, s).unwrap();
        load_scores(&p)
    }

    #[test]
    fn two_trajectories_five_candidates() {
        let t = load_str(
            "{\"traj\":1,\"cand\":[1,2,3,4,5],\"score\":[0.5,0.2,0.1,0.1,0.05]}\n\
             {\"traj\":2,\"cand\":[5,4,3,2,1],\"score\":[0.9,0.05,0.02,0.02,0.01]}\n",
        )
        .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.name(), "rnn");
        assert_eq!(t.depth(), 5);
        assert_eq!(t.rank_of(TrajectoryId(2), LocationId(3)), Some(3));
    }

    #[test]
    fn duplicate_trajectory_is_named() {
        let err = load_str(
            "{\"traj\":7,\"cand\":[1],\"score\":[0.5]}\n{\"traj\":7,\"cand\":[2],\"score\":[0.5]}\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate trajectory 7"), "{err}");
    }

    #[test]
    fn increasing_scores_are_rejected() {
        let err = load_str("{\"traj\":1,\"cand\":[1,2],\"score\":[0.2,0.5]}\n").unwrap_err();
        assert!(err.to_string().contains("non-increasing"), "{err}");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(load_str("{\"traj\":1,\"cand\":[1,2],\"score\":[0.2]}\n").is_err());
        assert!(load_str("not json\n").is_err());
        assert!(load_str("{\"traj\":1,\"cand\":[1,1],\"score\":[0.2,0.1]}\n").is_err());
    }

    #[test]
    fn written_file_is_byte_stable() {
        let mut t = ScoreTable::new("m", 5);
        t.insert(
            TrajectoryId(3),
            vec![Candidate::new(LocationId(2), 0.75), Candidate::new(LocationId(0), 0.1)],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        t.write_jsonl(&p).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "{\"traj\":3,\"cand\":[2,0],\"score\":[0.75,0.1]}\n"
        );
        assert_eq!(load_scores(&p).unwrap().get(TrajectoryId(3)), t.get(TrajectoryId(3)));
    }

    #[test]
    fn coverage_report() {
        let mut t = ScoreTable::new("m", 5);
        t.insert(TrajectoryId(1), vec![]).unwrap();
        t.insert(TrajectoryId(4), vec![]).unwrap();
        let c = t.coverage([TrajectoryId(1), TrajectoryId(2)]);
        assert_eq!(c.missing, vec![TrajectoryId(2)]);
        assert_eq!(c.unexpected, vec![TrajectoryId(4)]);
        assert!(!c.is_complete());
    }
}
