//! Pairwise overlap metrics over location sequences.
//!
//! Every function takes the test trajectory `test` and the training
//! trajectory `train` as location-id slices; timestamps play no role.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::LocationId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMetric {
    Js,
    Lcst,
    Ofe,
}

impl OverlapMetric {
    pub const ALL: [OverlapMetric; 3] = [OverlapMetric::Js, OverlapMetric::Lcst, OverlapMetric::Ofe];

    pub fn as_str(self) -> &'static str {
        match self {
            OverlapMetric::Js => "js",
            OverlapMetric::Lcst => "lcst",
            OverlapMetric::Ofe => "ofe",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OverlapMetric::Js => "JS",
            OverlapMetric::Lcst => "LCST",
            OverlapMetric::Ofe => "OFE",
        }
    }
}

impl fmt::Display for OverlapMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OverlapMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "js" => Ok(OverlapMetric::Js),
            "lcst" => Ok(OverlapMetric::Lcst),
            "ofe" => Ok(OverlapMetric::Ofe),
            other => Err(Error::input(format!("unknown overlap metric {other:?}"))),
        }
    }
}

/// Parses a comma-separated metric list such as `js,ofe`.
pub fn parse_metric_list(s: &str) -> Result<Vec<OverlapMetric>> {
    let mut out: Vec<OverlapMetric> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let m = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::input("empty metric list"));
    }
    Ok(out)
}

/// Which reading of the Jaccard formula to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JaccardVariant {
    /// `|A ∩ B| / |A ∪ B|`; 1 means full overlap.
    #[default]
    Similarity,
    /// `(|A ∪ B| - |A ∩ B|) / |A ∪ B|`, the distance form. Kept for audits.
    Distance,
}

impl FromStr for JaccardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(JaccardVariant::Similarity),
            "distance" => Ok(JaccardVariant::Distance),
            other => Err(Error::input(format!("unknown Jaccard variant {other:?}"))),
        }
    }
}

fn non_empty(test: &[LocationId], train: &[LocationId]) -> Result<()> {
    if test.is_empty() || train.is_empty() {
        return Err(Error::input("overlap metrics need non-empty trajectories"));
    }
    Ok(())
}

/// Jaccard ratio from set sizes and their intersection size.
pub(crate) fn jaccard_from_counts(variant: JaccardVariant, a: usize, b: usize, inter: usize) -> f64 {
    let union = a + b - inter;
    match variant {
        JaccardVariant::Similarity => inter as f64 / union as f64,
        JaccardVariant::Distance => (union - inter) as f64 / union as f64,
    }
}

/// Jaccard similarity of the two location sets.
pub fn js(test: &[LocationId], train: &[LocationId]) -> Result<f64> {
    js_variant(test, train, JaccardVariant::Similarity)
}

pub fn js_variant(test: &[LocationId], train: &[LocationId], variant: JaccardVariant) -> Result<f64> {
    non_empty(test, train)?;
    let a: HashSet<LocationId> = test.iter().copied().collect();
    let b: HashSet<LocationId> = train.iter().copied().collect();
    let inter = a.intersection(&b).count();
    Ok(jaccard_from_counts(variant, a.len(), b.len(), inter))
}

/// Length of the longest common subsequence of the two sequences.
pub fn lcs_len(a: &[LocationId], b: &[LocationId]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for &x in long {
        for (j, &y) in short.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Longest common subsequence length normalized by the test length.
pub fn lcst(test: &[LocationId], train: &[LocationId]) -> Result<f64> {
    non_empty(test, train)?;
    Ok(lcs_len(train, test) as f64 / test.len() as f64)
}

/// Length of the common suffix.
pub fn common_suffix_len(a: &[LocationId], b: &[LocationId]) -> usize {
    a.iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count()
}

/// Common suffix length normalized by the test length.
pub fn ofe(test: &[LocationId], train: &[LocationId]) -> Result<f64> {
    non_empty(test, train)?;
    Ok(common_suffix_len(test, train) as f64 / test.len() as f64)
}

pub fn metric_value(
    metric: OverlapMetric,
    test: &[LocationId],
    train: &[LocationId],
    variant: JaccardVariant,
) -> Result<f64> {
    match metric {
        OverlapMetric::Js => js_variant(test, train, variant),
        OverlapMetric::Lcst => lcst(test, train),
        OverlapMetric::Ofe => ofe(test, train),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> Vec<LocationId> {
        s.bytes().map(|b| LocationId((b - b'a') as u32)).collect()
    }

    #[test]
    fn js_examples() {
        assert_eq!(js(&seq("abc"), &seq("cab")).unwrap(), 1.0);
        assert_eq!(js(&seq("ab"), &seq("cd")).unwrap(), 0.0);
        assert_eq!(js(&seq("abc"), &seq("bcd")).unwrap(), 0.5);
        // Distance variant is the complement.
        assert_eq!(
            js_variant(&seq("abc"), &seq("bcd"), JaccardVariant::Distance).unwrap(),
            0.5
        );
        assert_eq!(
            js_variant(&seq("abc"), &seq("abc"), JaccardVariant::Distance).unwrap(),
            0.0
        );
    }

    #[test]
    fn lcst_examples() {
        // P = [a,b,c,d] (train), R = [b,d] (test)
        assert_eq!(lcs_len(&seq("abcd"), &seq("bd")), 2);
        assert_eq!(lcst(&seq("bd"), &seq("abcd")).unwrap(), 1.0);
        assert_eq!(lcst(&seq("xy"), &seq("abcd")).unwrap(), 0.0);
        // P = [a,b,a], R = [b,a,b]
        assert_eq!(lcs_len(&seq("aba"), &seq("bab")), 2);
        assert_eq!(lcst(&seq("bab"), &seq("aba")).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn ofe_examples() {
        // P = [a,b,c] (train), R = [z,b,c] (test)
        assert_eq!(ofe(&seq("zbc"), &seq("abc")).unwrap(), 2.0 / 3.0);
        assert_eq!(ofe(&seq("abc"), &seq("abc")).unwrap(), 1.0);
        // P = [b,c,a], R = [a,b,c]
        assert_eq!(ofe(&seq("abc"), &seq("bca")).unwrap(), 0.0);
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(js(&[], &seq("a")).is_err());
        assert!(lcst(&seq("a"), &[]).is_err());
        assert!(ofe(&[], &[]).is_err());
    }

    #[test]
    fn metric_lists() {
        assert_eq!(
            parse_metric_list("js,ofe").unwrap(),
            vec![OverlapMetric::Js, OverlapMetric::Ofe]
        );
        assert!(parse_metric_list("js,dtw").is_err());
        assert!(parse_metric_list("").is_err());
    }
}
