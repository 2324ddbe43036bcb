//! Synthetic check-in corpora whose moves follow the distance and
//! visitation laws, for examples and end-to-end tests.
//!
//! Each user has a home and a few favourite places. A move either returns
//! to a favourite or draws the next location with probability
//! proportional to `(max(r, r_min) * f)^-γ`, where `r` is the distance
//! from the current location and `f` the running global visit count.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine, LatLon};
use crate::traj::{LocationId, LocationVocabulary, Point, Trajectory, TrajectoryId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub users: usize,
    pub locations: usize,
    pub trajectories_per_user: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub gamma: f64,
    /// Probability that a move returns to one of the user's favourites.
    pub p_return: f64,
    /// Probability that a trajectory starts at the user's home rather than
    /// at a uniformly drawn location.
    pub p_start_home: f64,
    /// When set, law moves only consider locations in the surrounding 3×3
    /// block of grid cells of this side, which keeps generation linear in
    /// corpus size for large vocabularies.
    pub law_radius_km: Option<f64>,
    /// South-west and north-east corners of the study area.
    pub sw: (f64, f64),
    pub ne: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 100,
            locations: 1000,
            trajectories_per_user: 15,
            min_len: 5,
            max_len: 10,
            gamma: 1.6,
            p_return: 0.2,
            p_start_home: 0.5,
            law_radius_km: None,
            sw: (40.70, -74.02),
            ne: (40.80, -73.90),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub vocabulary: LocationVocabulary,
    /// Sorted by id; ids are dense from 0.
    pub trajectories: Vec<Trajectory>,
}

const HOUR: i64 = 3600;
/// Gap between a user's consecutive trajectories, longer than any session
/// threshold in use.
const TRAJECTORY_GAP: i64 = 100 * HOUR;

struct Walker<'a> {
    coords: &'a [LatLon],
    counts: Vec<f64>,
    gamma: f64,
    r_min: f64,
    /// Candidate locations per source, when moves are local.
    neighbours: Option<Vec<Vec<usize>>>,
}

/// Locations in the 3×3 block of `side_km` cells around each location.
fn grid_neighbours(coords: &[LatLon], side_km: f64) -> Vec<Vec<usize>> {
    use std::collections::HashMap;
    let deg = side_km / 111.0;
    let cell = |c: &LatLon| ((c.lat() / deg).floor() as i64, (c.lon() / deg).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, c) in coords.iter().enumerate() {
        grid.entry(cell(c)).or_default().push(i);
    }
    coords
        .iter()
        .map(|c| {
            let (x, y) = cell(c);
            let mut v: Vec<usize> = (-1..=1)
                .flat_map(|dx| (-1..=1).map(move |dy| (x + dx, y + dy)))
                .filter_map(|k| grid.get(&k))
                .flatten()
                .copied()
                .collect();
            v.sort_unstable();
            v
        })
        .collect()
}

impl Walker<'_> {
    fn law_step(&self, from: usize, rng: &mut ChaCha8Rng) -> usize {
        let a = self.coords[from];
        let all: Vec<usize>;
        let cands: &[usize] = match &self.neighbours {
            Some(n) if n[from].len() > 1 => &n[from],
            _ => {
                all = (0..self.coords.len()).collect();
                &all
            }
        };
        let w: Vec<f64> = cands
            .iter()
            .map(|&l| {
                if l == from {
                    0.0
                } else {
                    let r = haversine(a, self.coords[l]).max(self.r_min);
                    (r * self.counts[l]).powf(-self.gamma)
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (i, wl) in w.iter().enumerate() {
            u -= wl;
            if u <= 0.0 && *wl > 0.0 {
                return cands[i];
            }
        }
        w.iter().rposition(|&x| x > 0.0).map_or(from, |i| cands[i])
    }
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticCorpus> {
    if config.users == 0 || config.locations < 2 || config.trajectories_per_user == 0 {
        return Err(Error::input("need users, at least two locations and trajectories"));
    }
    if config.min_len < 1 || config.max_len < config.min_len {
        return Err(Error::input("trajectory length bounds are inconsistent"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vocabulary = LocationVocabulary::new();
    let mut coords = Vec::with_capacity(config.locations);
    for i in 0..config.locations {
        let c = LatLon::new(
            rng.gen_range(config.sw.0..config.ne.0),
            rng.gen_range(config.sw.1..config.ne.1),
        )?;
        vocabulary.push(&format!("venue{i:05}"), c)?;
        coords.push(c);
    }
    let r_min = crate::laws::r_min_from_vocabulary(&vocabulary);

    let favourites: Vec<Vec<usize>> = (0..config.users)
        .map(|_| {
            let n = rng.gen_range(1..=3);
            (0..config.locations).collect::<Vec<_>>().choose_multiple(&mut rng, n).copied().collect()
        })
        .collect();

    let mut walker = Walker {
        coords: &coords,
        counts: vec![1.0; config.locations],
        gamma: config.gamma,
        r_min,
        neighbours: config.law_radius_km.map(|r| grid_neighbours(&coords, r)),
    };
    let mut per_user: Vec<Vec<Vec<usize>>> = vec![Vec::new(); config.users];
    // Round-robin over users so the running counts grow evenly in time.
    for _round in 0..config.trajectories_per_user {
        for (u, favs) in favourites.iter().enumerate() {
            let len = rng.gen_range(config.min_len..=config.max_len);
            let start = if rng.gen_bool(config.p_start_home) {
                favs[0]
            } else {
                rng.gen_range(0..config.locations)
            };
            let mut locs = vec![start];
            while locs.len() < len {
                let cur = *locs.last().unwrap();
                let others: Vec<usize> = favs.iter().copied().filter(|&f| f != cur).collect();
                let next = if !others.is_empty() && rng.gen_bool(config.p_return) {
                    *others.choose(&mut rng).unwrap()
                } else {
                    walker.law_step(cur, &mut rng)
                };
                locs.push(next);
            }
            for &l in &locs {
                walker.counts[l] += 1.0;
            }
            per_user[u].push(locs);
        }
    }

    let mut trajectories = Vec::new();
    for (u, trajs) in per_user.into_iter().enumerate() {
        let user = format!("user{u:04}");
        for (k, locs) in trajs.into_iter().enumerate() {
            let start = k as i64 * TRAJECTORY_GAP;
            let points = locs
                .iter()
                .enumerate()
                .map(|(i, &l)| Point::new(start + i as i64 * HOUR, LocationId(l as u32)))
                .collect();
            let id = TrajectoryId(trajectories.len() as u64);
            trajectories.push(Trajectory::new(id, user.clone(), points)?);
        }
    }
    Ok(SyntheticCorpus {
        vocabulary,
        trajectories,
    })
}

impl SyntheticCorpus {
    /// Writes the corpus as a check-in CSV readable by the generic-csv
    /// source format (`user,timestamp,lat,lon,venue`).
    pub fn write_checkins_csv(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "user,timestamp,lat,lon,venue").map_err(io)?;
        for t in &self.trajectories {
            for p in t.points() {
                let loc = self.vocabulary.get(p.location).expect("generated location");
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    t.user(),
                    p.timestamp,
                    loc.coord.lat(),
                    loc.coord.lon(),
                    loc.key
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            users: 10,
            locations: 40,
            trajectories_per_user: 6,
            ..Default::default()
        }
    }

    #[test]
    fn shape_and_determinism() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.trajectories.len(), 60);
        assert!(c.trajectories.iter().all(|t| (5..=10).contains(&t.len())));
        c.vocabulary.check_covers(&c.trajectories).unwrap();
        assert_eq!(generate(&small()).unwrap(), c);
        let other = generate(&SynthConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(other, c);
    }

    #[test]
    fn local_moves_stay_in_the_neighbourhood() {
        let cfg = SynthConfig { law_radius_km: Some(1.0), p_return: 0.0, locations: 2000, ..small() };
        let c = generate(&cfg).unwrap();
        let v = &c.vocabulary;
        for t in &c.trajectories {
            for w in t.points().windows(2) {
                // Two cells diagonally, plus slack for the degree conversion.
                assert!(haversine(v.coord(w[0].location), v.coord(w[1].location)) < 3.0);
            }
        }
    }

    #[test]
    fn law_moves_favour_nearby_locations() {
        let c = generate(&SynthConfig { p_return: 0.0, ..small() }).unwrap();
        let v = &c.vocabulary;
        let mut hop = 0.0;
        let mut n = 0.0;
        for t in &c.trajectories {
            for w in t.points().windows(2) {
                hop += haversine(v.coord(w[0].location), v.coord(w[1].location));
                n += 1.0;
            }
        }
        // Mean distance between random pairs in the box is several km.
        let ids: Vec<_> = v.ids().collect();
        let mut rand_pair = 0.0;
        for a in &ids {
            for b in &ids {
                rand_pair += haversine(v.coord(*a), v.coord(*b));
            }
        }
        rand_pair /= (ids.len() * ids.len()) as f64;
        assert!(hop / n < 0.6 * rand_pair, "{} vs {}", hop / n, rand_pair);
    }
}
