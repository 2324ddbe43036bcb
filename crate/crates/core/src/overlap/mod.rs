//! Test-train overlap: JS, LCST and OFE metrics, max-over-training
//! aggregation and stratification into overlap bins.

mod bins;
mod index;
pub mod io;
mod metrics;

pub use bins::{stratify, OverlapBin, Strata};
pub use index::{compute_overlaps, LocationIndex, OverlapOptions, OverlapRecord};
pub use metrics::{
    common_suffix_len, js, js_variant, lcs_len, lcst, metric_value, ofe, parse_metric_list,
    JaccardVariant, OverlapMetric,
};
