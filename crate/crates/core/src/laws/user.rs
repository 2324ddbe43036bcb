//! Per-user features: mean hop distance, radii of gyration and the
//! returner/explorer profile.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine, LatLon};
use crate::traj::{LocationId, LocationVocabulary, Trajectory};

/// Mean distance between consecutive points, never across trajectory
/// boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopDistance {
    pub km: f64,
    pub pairs: usize,
    /// Set when the history has no consecutive pair; `km` is then 0.
    pub no_pairs: bool,
}

pub fn mean_hop_distance(history: &[Trajectory], vocab: &LocationVocabulary) -> HopDistance {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for t in history {
        for w in t.points().windows(2) {
            sum += haversine(vocab.coord(w[0].location), vocab.coord(w[1].location));
            pairs += 1;
        }
    }
    HopDistance {
        km: if pairs == 0 { 0.0 } else { sum / pairs as f64 },
        pairs,
        no_pairs: pairs == 0,
    }
}

/// Visit-weighted radius of gyration in km over the distinct locations of
/// `history`. With `k`, only the `k` most visited locations (ties to the
/// lower id) enter both the centroid and the spread.
pub fn radius_of_gyration(history: &[Trajectory], vocab: &LocationVocabulary, k: Option<usize>) -> f64 {
    let mut visits: HashMap<LocationId, u64> = HashMap::new();
    for t in history {
        for p in t.points() {
            *visits.entry(p.location).or_default() += 1;
        }
    }
    let mut ranked: Vec<(LocationId, u64)> = visits.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    if let Some(k) = k {
        ranked.truncate(k);
    }
    if ranked.is_empty() {
        return 0.0;
    }
    let total: f64 = ranked.iter().map(|&(_, w)| w as f64).sum();
    let (mut lat, mut lon) = (0.0, 0.0);
    for &(l, w) in &ranked {
        let c = vocab.coord(l);
        lat += w as f64 * c.lat();
        lon += w as f64 * c.lon();
    }
    let centroid = LatLon::new(lat / total, lon / total).expect("weighted mean of valid coordinates");
    let spread: f64 = ranked
        .iter()
        .map(|&(l, w)| w as f64 * haversine(vocab.coord(l), centroid).powi(2))
        .sum();
    (spread / total).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Returner = 0,
    Explorer = 1,
}

/// Returner when the two most visited locations account for more than
/// half of the overall radius (`r_g2 > r_g / 2`); zero radius is a
/// returner.
pub fn returner_explorer(r_g: f64, r_g2: f64) -> Profile {
    if r_g <= 0.0 || r_g2 > r_g / 2.0 {
        Profile::Returner
    } else {
        Profile::Explorer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLawFeatures {
    pub dist_u: f64,
    pub r_g: f64,
    pub r_g2: f64,
    pub re_u: u8,
}

impl Default for UserLawFeatures {
    fn default() -> Self {
        Self {
            dist_u: 0.0,
            r_g: 0.0,
            r_g2: 0.0,
            re_u: Profile::Returner as u8,
        }
    }
}

impl UserLawFeatures {
    pub fn from_history(history: &[Trajectory], vocab: &LocationVocabulary) -> Self {
        let r_g = radius_of_gyration(history, vocab, None);
        let r_g2 = radius_of_gyration(history, vocab, Some(2));
        Self {
            dist_u: mean_hop_distance(history, vocab).km,
            r_g,
            r_g2,
            re_u: returner_explorer(r_g, r_g2) as u8,
        }
    }
}

/// Features for every user appearing in `trajectories`.
pub fn user_features(
    trajectories: &[Trajectory],
    vocab: &LocationVocabulary,
) -> BTreeMap<String, UserLawFeatures> {
    let mut by_user: BTreeMap<&str, Vec<Trajectory>> = BTreeMap::new();
    for t in trajectories {
        by_user.entry(t.user()).or_default().push(t.clone());
    }
    by_user
        .into_iter()
        .map(|(u, h)| (u.to_string(), UserLawFeatures::from_history(&h, vocab)))
        .collect()
}

pub fn write_features_csv(path: &Path, features: &BTreeMap<String, UserLawFeatures>) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["user_id", "dist_u", "r_g", "r_g2", "re_u"]).map_err(io)?;
    for (u, f) in features {
        w.write_record([
            u.clone(),
            f.dist_u.to_string(),
            f.r_g.to_string(),
            f.r_g2.to_string(),
            f.re_u.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<BTreeMap<String, UserLawFeatures>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        let row = row.map_err(|e| err(e.to_string()))?;
        if row.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", row.len())));
        }
        let num = |j: usize| -> Result<f64> {
            row[j].parse().map_err(|_| err(format!("bad number {:?}", &row[j])))
        };
        let re_u: u8 = row[4].parse().map_err(|_| err("bad re_u".into()))?;
        if re_u > 1 {
            return Err(err(format!("re_u must be 0 or 1, got {re_u}")));
        }
        out.insert(
            row[0].to_string(),
            UserLawFeatures {
                dist_u: num(1)?,
                r_g: num(2)?,
                r_g2: num(3)?,
                re_u,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vocab(coords: &[(f64, f64)]) -> LocationVocabulary {
        let mut v = LocationVocabulary::new();
        for (i, &(a, b)) in coords.iter().enumerate() {
            v.intern(&i.to_string(), LatLon::new(a, b).unwrap());
        }
        v
    }

    fn t(id: u64, locs: &[u32]) -> Trajectory {
        Trajectory::from_locations(id, "u", locs).unwrap()
    }

    #[test]
    fn hop_distance_cases() {
        let v = vocab(&[(0.0, 0.0), (0.0, 1.0)]);
        assert_eq!(mean_hop_distance(&[t(0, &[0, 0, 0])], &v).km, 0.0);
        let d = mean_hop_distance(&[t(0, &[0, 1])], &v).km;
        assert_abs_diff_eq!(d, 111.19, epsilon = 0.01);
        let h = mean_hop_distance(&[t(0, &[1]), t(1, &[0])], &v);
        assert!(h.no_pairs);
        assert_eq!(h.km, 0.0);
    }

    #[test]
    fn hop_distance_mean_of_one_and_three() {
        // Points on the equator 1 km and 3 km from the origin.
        let deg = |km: f64| km / (6371.0 * std::f64::consts::PI / 180.0);
        let v = vocab(&[(0.0, 0.0), (0.0, deg(1.0)), (0.0, deg(4.0))]);
        let h = mean_hop_distance(&[t(0, &[0, 1, 2])], &v);
        assert_abs_diff_eq!(h.km, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn hop_distance_ignores_trajectory_order() {
        let v = vocab(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 0.5)]);
        let a = [t(0, &[0, 1, 2]), t(1, &[3, 0])];
        let b = [t(1, &[3, 0]), t(0, &[0, 1, 2])];
        assert_abs_diff_eq!(
            mean_hop_distance(&a, &v).km,
            mean_hop_distance(&b, &v).km,
            epsilon = 1e-12
        );
    }

    #[test]
    fn gyration_of_one_location_is_zero() {
        let v = vocab(&[(10.0, 10.0)]);
        assert_eq!(radius_of_gyration(&[t(0, &[0, 0, 0])], &v, None), 0.0);
    }

    #[test]
    fn gyration_of_two_equal_locations_is_half_their_distance() {
        let v = vocab(&[(0.0, 0.0), (0.0, 0.2)]);
        let rg = radius_of_gyration(&[t(0, &[0, 1])], &v, None);
        let d = haversine(LatLon::new(0.0, 0.0).unwrap(), LatLon::new(0.0, 0.1).unwrap());
        assert_abs_diff_eq!(rg, d, epsilon = 1e-9);
    }

    #[test]
    fn two_radius_can_exceed_full_radius() {
        // Two hubs visited twice each with a once-visited midpoint: the
        // midpoint pulls the full radius below the two-hub radius.
        let v = vocab(&[(0.0, 0.0), (0.0, 0.2), (0.0, 0.1)]);
        let h = [t(0, &[0, 1, 0, 1, 2])];
        let rg = radius_of_gyration(&h, &v, None);
        let rg2 = radius_of_gyration(&h, &v, Some(2));
        let half = haversine(LatLon::new(0.0, 0.0).unwrap(), LatLon::new(0.0, 0.1).unwrap());
        assert_abs_diff_eq!(rg2, half, epsilon = 1e-9);
        assert_abs_diff_eq!(rg, half * (4.0f64 / 5.0).sqrt(), epsilon = 1e-6);
        assert!(rg2 > rg);
    }

    #[test]
    fn two_radius_equals_full_radius_with_two_locations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coords: Vec<(f64, f64)> = (0..60)
            .map(|_| (rng.gen_range(40.5..41.0), rng.gen_range(-74.3..-73.7)))
            .collect();
        let v = vocab(&coords);
        for u in 0..1000 {
            let (a, b) = (rng.gen_range(0..60), rng.gen_range(0..60));
            let locs: Vec<u32> = (0..rng.gen_range(2..30))
                .map(|_| if rng.gen_bool(0.5) { a } else { b })
                .collect();
            let h = [t(u, &locs)];
            let rg = radius_of_gyration(&h, &v, None);
            let rg2 = radius_of_gyration(&h, &v, Some(2));
            assert!(rg2 <= rg + 1e-9 && rg2 >= 0.0, "user {u}: {rg2} > {rg}");
        }
    }

    #[test]
    fn profile_threshold() {
        assert_eq!(returner_explorer(2.0, 2.0), Profile::Returner);
        assert_eq!(returner_explorer(2.0, 0.0), Profile::Explorer);
        assert_eq!(returner_explorer(1.0, 0.6), Profile::Returner);
        assert_eq!(returner_explorer(0.0, 0.0), Profile::Returner);
        for scale in [0.001, 1.0, 1e4] {
            assert_eq!(returner_explorer(scale, 0.4 * scale), Profile::Explorer);
            assert_eq!(returner_explorer(scale, 0.7 * scale), Profile::Returner);
        }
    }

    #[test]
    fn features_csv_round_trip() {
        let v = vocab(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let mut a = t(0, &[0, 1, 2, 0]);
        a = Trajectory::new(a.id(), "alice", a.points().to_vec()).unwrap();
        let feats = user_features(&[a], &v);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("features.csv");
        write_features_csv(&p, &feats).unwrap();
        assert_eq!(read_features_csv(&p).unwrap(), feats);
    }
}
