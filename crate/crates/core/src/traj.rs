//! Domain types shared by every stage: points, trajectories and the
//! location vocabulary.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LatLon;

/// Dense index into a [`LocationVocabulary`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct LocationId(pub u32);

impl LocationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TrajectoryId(pub u64);

impl fmt::Display for TrajectoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A visit to a location at a given time (seconds since epoch).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Point {
    pub timestamp: i64,
    pub location: LocationId,
}

impl Point {
    pub fn new(timestamp: i64, location: LocationId) -> Self {
        Self {
            timestamp,
            location,
        }
    }
}

/// Time-ordered, non-empty sequence of points belonging to one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    id: TrajectoryId,
    user: String,
    points: Vec<Point>,
}

impl Trajectory {
    pub fn new(id: TrajectoryId, user: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input(format!("trajectory {id} has no points")));
        }
        if let Some(p) = points.iter().find(|p| p.timestamp < 0) {
            return Err(Error::input(format!(
                "trajectory {id} has negative timestamp {}",
                p.timestamp
            )));
        }
        if points.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::input(format!(
                "trajectory {id} timestamps are not non-decreasing"
            )));
        }
        Ok(Self {
            id,
            user: user.into(),
            points,
        })
    }

    /// Builds a trajectory from bare location ids with timestamps 0, 1, 2, ...
    pub fn from_locations(id: u64, user: impl Into<String>, locations: &[u32]) -> Result<Self> {
        let points = locations
            .iter()
            .enumerate()
            .map(|(t, &l)| Point::new(t as i64, LocationId(l)))
            .collect();
        Self::new(TrajectoryId(id), user, points)
    }

    pub fn id(&self) -> TrajectoryId {
        self.id
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_timestamp(&self) -> i64 {
        self.points[0].timestamp
    }

    pub fn last_timestamp(&self) -> i64 {
        self.points[self.points.len() - 1].timestamp
    }

    pub fn last_location(&self) -> LocationId {
        self.points[self.points.len() - 1].location
    }

    pub fn locations(&self) -> Vec<LocationId> {
        self.points.iter().map(|p| p.location).collect()
    }

    /// Splits off the final point: returns the prefix as a trajectory and
    /// the held-out location. `None` for single-point trajectories.
    pub fn split_last(&self) -> Option<(Trajectory, LocationId)> {
        if self.points.len() < 2 {
            return None;
        }
        let (target, prefix) = self.points.split_last()?;
        Some((
            Trajectory {
                id: self.id,
                user: self.user.clone(),
                points: prefix.to_vec(),
            },
            target.location,
        ))
    }
}

/// One vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub coord: LatLon,
    pub key: String,
}

/// Dense mapping `LocationId -> (coordinate, raw key)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocationVocabulary {
    entries: Vec<Location>,
    by_key: HashMap<String, LocationId>,
}

impl LocationVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `key`, inserting it with `coord` if unseen. The
    /// coordinate of an existing key is never updated.
    pub fn intern(&mut self, key: &str, coord: LatLon) -> LocationId {
        if let Some(&id) = self.by_key.get(key) {
            return id;
        }
        let id = LocationId(self.entries.len() as u32);
        self.entries.push(Location {
            coord,
            key: key.to_string(),
        });
        self.by_key.insert(key.to_string(), id);
        id
    }

    /// Appends an entry whose key must be new.
    pub fn push(&mut self, key: &str, coord: LatLon) -> Result<LocationId> {
        if self.by_key.contains_key(key) {
            return Err(Error::input(format!("duplicate location key {key:?}")));
        }
        Ok(self.intern(key, coord))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: LocationId) -> Option<&Location> {
        self.entries.get(id.index())
    }

    pub fn coord(&self, id: LocationId) -> LatLon {
        self.entries[id.index()].coord
    }

    pub fn lookup(&self, key: &str) -> Option<LocationId> {
        self.by_key.get(key).copied()
    }

    pub fn contains(&self, id: LocationId) -> bool {
        id.index() < self.entries.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = LocationId> + '_ {
        (0..self.entries.len() as u32).map(LocationId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LocationId, &Location)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (LocationId(i as u32), e))
    }

    /// Checks that every point of `trajectories` refers to an entry.
    pub fn check_covers<'a>(&self, trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Result<()> {
        for t in trajectories {
            if let Some(p) = t.points().iter().find(|p| !self.contains(p.location)) {
                return Err(Error::validation(format!(
                    "trajectory {} references location {} outside a vocabulary of {}",
                    t.id(),
                    p.location,
                    self.len()
                )));
            }
        }
        Ok(())
    }
}
