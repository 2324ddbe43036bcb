//! Great-circle distance and square-grid tessellation of raw GPS fixes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{LocationId, LocationVocabulary};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const METERS_PER_DEGREE: f64 = EARTH_RADIUS_KM * 1000.0 * std::f64::consts::PI / 180.0;

/// A validated WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    lat: f64,
    lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::input(format!("latitude {lat} outside [-90, 90]")));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::input(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Haversine distance in kilometers.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.min(1.0).sqrt().asin()
}

/// Haversine over raw degree pairs, validating both ends.
pub fn haversine_deg(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    Ok(haversine(LatLon::new(a.0, a.1)?, LatLon::new(b.0, b.1)?))
}

/// Square grid anchored at a bounding-box corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    cell_side_m: f64,
    origin: LatLon,
}

impl GridSpec {
    pub const DEFAULT_CELL_SIDE_M: f64 = 500.0;

    pub fn new(cell_side_m: f64, origin: LatLon) -> Result<Self> {
        if !(cell_side_m.is_finite() && cell_side_m > 0.0) {
            return Err(Error::input(format!(
                "grid cell side must be positive, got {cell_side_m}"
            )));
        }
        Ok(Self {
            cell_side_m,
            origin,
        })
    }

    /// Grid whose origin is the south-west corner of the fixes' bounding box.
    pub fn covering(cell_side_m: f64, fixes: &[LatLon]) -> Result<Self> {
        let first = fixes
            .first()
            .ok_or_else(|| Error::input("cannot build a grid over zero fixes"))?;
        let (lat, lon) = fixes.iter().fold((first.lat, first.lon), |(la, lo), p| {
            (la.min(p.lat), lo.min(p.lon))
        });
        Self::new(cell_side_m, LatLon::new(lat, lon)?)
    }

    pub fn cell_side_m(&self) -> f64 {
        self.cell_side_m
    }

    pub fn origin(&self) -> LatLon {
        self.origin
    }

    fn lon_scale(&self) -> f64 {
        METERS_PER_DEGREE * self.origin.lat.to_radians().cos().max(1e-6)
    }

    /// Integer cell coordinates of a fix.
    pub fn cell_of(&self, p: LatLon) -> (i64, i64) {
        let x = (p.lon - self.origin.lon) * self.lon_scale();
        let y = (p.lat - self.origin.lat) * METERS_PER_DEGREE;
        (
            (x / self.cell_side_m).floor() as i64,
            (y / self.cell_side_m).floor() as i64,
        )
    }

    /// Center of a cell, clamped into the valid coordinate range.
    pub fn cell_center(&self, cell: (i64, i64)) -> LatLon {
        let lon = self.origin.lon + (cell.0 as f64 + 0.5) * self.cell_side_m / self.lon_scale();
        let lat = self.origin.lat + (cell.1 as f64 + 0.5) * self.cell_side_m / METERS_PER_DEGREE;
        LatLon {
            lat: lat.clamp(-90.0, 90.0),
            lon: lon.clamp(-180.0, 180.0),
        }
    }
}

pub fn cell_key(cell: (i64, i64)) -> String {
    format!("cell:{}:{}", cell.0, cell.1)
}

/// Result of discretizing a stream of fixes.
#[derive(Debug, Clone)]
pub struct Tessellation {
    pub vocabulary: LocationVocabulary,
    /// One location per input fix, in input order.
    pub assignments: Vec<LocationId>,
}

/// Maps each fix to a grid cell. Cell ids are assigned in order of first
/// appearance, so the mapping is a deterministic function of the input.
pub fn tessellate(fixes: &[LatLon], spec: &GridSpec) -> Result<Tessellation> {
    if fixes.is_empty() {
        return Err(Error::input("cannot tessellate an empty fix stream"));
    }
    let mut vocabulary = LocationVocabulary::new();
    let mut seen: HashMap<(i64, i64), LocationId> = HashMap::new();
    let assignments = fixes
        .iter()
        .map(|&p| {
            let cell = spec.cell_of(p);
            *seen
                .entry(cell)
                .or_insert_with(|| vocabulary.intern(&cell_key(cell), spec.cell_center(cell)))
        })
        .collect();
    Ok(Tessellation {
        vocabulary,
        assignments,
    })
}
