use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlap::index::OverlapRecord;
use crate::traj::TrajectoryId;

/// Overlap range. Bins are half-open `[lo, hi)` except the top one,
/// which is closed so that a score of 1.0 lands in `80-100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OverlapBin {
    #[serde(rename = "0-20")]
    B0to20,
    #[serde(rename = "20-40")]
    B20to40,
    #[serde(rename = "40-60")]
    B40to60,
    #[serde(rename = "60-80")]
    B60to80,
    #[serde(rename = "80-100")]
    B80to100,
}

impl OverlapBin {
    pub const ALL: [OverlapBin; 5] = [
        OverlapBin::B0to20,
        OverlapBin::B20to40,
        OverlapBin::B40to60,
        OverlapBin::B60to80,
        OverlapBin::B80to100,
    ];

    pub fn from_score(score: f64) -> Self {
        if score < 0.2 {
            OverlapBin::B0to20
        } else if score < 0.4 {
            OverlapBin::B20to40
        } else if score < 0.6 {
            OverlapBin::B40to60
        } else if score < 0.8 {
            OverlapBin::B60to80
        } else {
            OverlapBin::B80to100
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OverlapBin::B0to20 => "0-20",
            OverlapBin::B20to40 => "20-40",
            OverlapBin::B40to60 => "40-60",
            OverlapBin::B60to80 => "60-80",
            OverlapBin::B80to100 => "80-100",
        }
    }
}

impl fmt::Display for OverlapBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for OverlapBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OverlapBin::ALL
            .into_iter()
            .find(|b| b.label() == s)
            .ok_or_else(|| Error::input(format!("unknown overlap bin {s:?}")))
    }
}

/// Partition of a test set into overlap bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    bins: BTreeMap<OverlapBin, Vec<TrajectoryId>>,
    lookup: HashMap<TrajectoryId, OverlapBin>,
}

impl Strata {
    pub fn members(&self, bin: OverlapBin) -> &[TrajectoryId] {
        self.bins.get(&bin).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn bin_of(&self, id: TrajectoryId) -> Option<OverlapBin> {
        self.lookup.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.lookup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lookup.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<OverlapBin, usize> {
        OverlapBin::ALL
            .into_iter()
            .map(|b| (b, self.members(b).len()))
            .collect()
    }

    /// Share of trajectories per bin; all zeros for an empty test set.
    pub fn fractions(&self) -> BTreeMap<OverlapBin, f64> {
        let n = self.len();
        self.counts()
            .into_iter()
            .map(|(b, c)| (b, if n == 0 { 0.0 } else { c as f64 / n as f64 }))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (OverlapBin, &[TrajectoryId])> + '_ {
        OverlapBin::ALL.into_iter().map(move |b| (b, self.members(b)))
    }
}

/// Groups records by bin. Members within a bin keep record order.
pub fn stratify(records: &[OverlapRecord]) -> Result<Strata> {
    let mut bins: BTreeMap<OverlapBin, Vec<TrajectoryId>> =
        OverlapBin::ALL.into_iter().map(|b| (b, Vec::new())).collect();
    let mut lookup = HashMap::with_capacity(records.len());
    for r in records {
        let bin = OverlapBin::from_score(r.score);
        if lookup.insert(r.test, bin).is_some() {
            return Err(Error::input(format!(
                "trajectory {} has more than one overlap record",
                r.test
            )));
        }
        bins.entry(bin).or_default().push(r.test);
    }
    Ok(Strata { bins, lookup })
}
