//! User filtering, session cutting and vocabulary construction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{tessellate, GridSpec, LatLon};
use crate::ingest::parse::RawRecord;
use crate::ingest::split::SplitFractions;
use crate::traj::{LocationVocabulary, Point, Trajectory, TrajectoryId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub min_records_per_user: usize,
    pub session_gap_hours: f64,
    /// Cut when the gap equals the threshold exactly (`>=`); otherwise only
    /// strictly larger gaps cut.
    pub cut_on_equal_gap: bool,
    pub min_trajectories_per_user: usize,
    pub split: SplitFractions,
    /// Grid cell side used when records carry no venue ids.
    pub grid_cell_m: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            min_records_per_user: 10,
            session_gap_hours: 72.0,
            cut_on_equal_gap: true,
            min_trajectories_per_user: 5,
            split: SplitFractions::default(),
            grid_cell_m: GridSpec::DEFAULT_CELL_SIDE_M,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_records_per_user < 1 || self.min_trajectories_per_user < 1 {
            return Err(Error::input("user filter thresholds must be at least 1"));
        }
        if !(self.session_gap_hours.is_finite() && self.session_gap_hours > 0.0) {
            return Err(Error::input(format!(
                "session gap must be positive, got {} h",
                self.session_gap_hours
            )));
        }
        if !(self.grid_cell_m.is_finite() && self.grid_cell_m > 0.0) {
            return Err(Error::input("grid cell side must be positive"));
        }
        self.split.validate()
    }

    fn gap_cuts(&self, gap_secs: i64) -> bool {
        let threshold = self.session_gap_hours * 3600.0;
        let gap = gap_secs as f64;
        if self.cut_on_equal_gap {
            gap >= threshold
        } else {
            gap > threshold
        }
    }
}

/// Record/user/trajectory counts after each pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub records_in: usize,
    pub users_in: usize,
    pub users_after_record_filter: usize,
    pub records_after_record_filter: usize,
    pub trajectories_after_cut: usize,
    pub users_final: usize,
    pub trajectories_final: usize,
    pub records_final: usize,
    pub records_dropped_with_users: usize,
    pub locations: usize,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub trajectories: Vec<Trajectory>,
    pub vocabulary: LocationVocabulary,
    pub stages: StageCounts,
}

/// Runs the record filter, session cutting and trajectory filter, then
/// builds the location vocabulary over the surviving records.
///
/// When every surviving record carries a venue id, venues are the
/// locations; otherwise all surviving fixes are tessellated on a square
/// grid of `config.grid_cell_m`.
pub fn preprocess(records: &[RawRecord], config: &PipelineConfig) -> Result<Preprocessed> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::input("no records to preprocess"));
    }
    let mut stages = StageCounts {
        records_in: records.len(),
        ..Default::default()
    };

    // Users in order of first appearance.
    let mut order: Vec<&str> = Vec::new();
    let mut by_user: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        by_user
            .entry(r.user.as_str())
            .or_insert_with(|| {
                order.push(r.user.as_str());
                Vec::new()
            })
            .push(i);
    }
    stages.users_in = order.len();

    let mut sessions_by_user: Vec<Vec<Vec<usize>>> = Vec::new();
    for user in &order {
        let mut idx = by_user.remove(user).unwrap_or_default();
        if idx.len() < config.min_records_per_user {
            continue;
        }
        stages.users_after_record_filter += 1;
        stages.records_after_record_filter += idx.len();
        idx.sort_by_key(|&i| records[i].timestamp);

        let mut sessions: Vec<Vec<usize>> = vec![vec![idx[0]]];
        for w in idx.windows(2) {
            if config.gap_cuts(records[w[1]].timestamp - records[w[0]].timestamp) {
                sessions.push(Vec::new());
            }
            sessions.last_mut().expect("non-empty").push(w[1]);
        }
        stages.trajectories_after_cut += sessions.len();
        if sessions.len() < config.min_trajectories_per_user {
            continue;
        }
        sessions_by_user.push(sessions);
    }

    let survivors: Vec<usize> = sessions_by_user.iter().flatten().flatten().copied().collect();
    stages.users_final = sessions_by_user.len();
    stages.trajectories_final = sessions_by_user.iter().map(Vec::len).sum();
    stages.records_final = survivors.len();
    stages.records_dropped_with_users = stages.records_in - stages.records_final;
    if survivors.is_empty() {
        return Err(Error::pipeline(format!(
            "no users survive preprocessing: {}",
            serde_json::to_string(&stages).unwrap_or_default()
        )));
    }

    let (vocabulary, location_of) = build_vocabulary(records, &survivors, config)?;
    stages.locations = vocabulary.len();

    let mut trajectories = Vec::with_capacity(stages.trajectories_final);
    for sessions in &sessions_by_user {
        for s in sessions {
            let id = TrajectoryId(trajectories.len() as u64);
            let points = s
                .iter()
                .map(|&i| Point::new(records[i].timestamp, location_of[&i]))
                .collect();
            trajectories.push(Trajectory::new(id, records[s[0]].user.clone(), points)?);
        }
    }

    Ok(Preprocessed {
        trajectories,
        vocabulary,
        stages,
    })
}

fn build_vocabulary(
    records: &[RawRecord],
    survivors: &[usize],
    config: &PipelineConfig,
) -> Result<(LocationVocabulary, HashMap<usize, crate::traj::LocationId>)> {
    let mut location_of = HashMap::with_capacity(survivors.len());
    if survivors.iter().all(|&i| records[i].venue.is_some()) {
        let mut vocab = LocationVocabulary::new();
        for &i in survivors {
            let r = &records[i];
            let key = r.venue.as_deref().expect("checked above");
            location_of.insert(i, vocab.intern(key, r.coord));
        }
        return Ok((vocab, location_of));
    }
    if survivors.iter().any(|&i| records[i].venue.is_some()) {
        log::warn!("records mix venue ids and bare fixes; tessellating all of them");
    }
    let fixes: Vec<LatLon> = survivors.iter().map(|&i| records[i].coord).collect();
    let grid = GridSpec::covering(config.grid_cell_m, &fixes)?;
    let t = tessellate(&fixes, &grid)?;
    for (&i, &loc) in survivors.iter().zip(&t.assignments) {
        location_of.insert(i, loc);
    }
    Ok((t.vocabulary, location_of))
}

/// Turns trajectories back into records keyed by vocabulary raw keys, so
/// that the output of [`preprocess`] can be fed to it again.
pub fn records_from_trajectories(
    trajectories: &[Trajectory],
    vocabulary: &LocationVocabulary,
) -> Vec<RawRecord> {
    trajectories
        .iter()
        .flat_map(|t| {
            t.points().iter().map(move |p| {
                let loc = vocabulary.get(p.location).expect("location in vocabulary");
                RawRecord {
                    user: t.user().to_string(),
                    timestamp: p.timestamp,
                    coord: loc.coord,
                    venue: Some(loc.key.clone()),
                }
            })
        })
        .collect()
}
