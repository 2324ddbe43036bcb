//! Dataset parsing, preprocessing and temporal splitting.

mod parse;
mod pipeline;
mod split;
pub mod store;

use std::path::Path;

pub use parse::{
    parse, parse_reader, parse_timestamp, GenericColumns, ParseOutcome, RawRecord, Rejection,
    SourceFormat, PORTO_SAMPLING_SECS,
};
pub use pipeline::{preprocess, records_from_trajectories, PipelineConfig, Preprocessed, StageCounts};
pub use split::{
    split, DatasetSplit, Provenance, SplitCounts, SplitFractions, SplitParts, SPLIT_ROUNDING,
};

use crate::digest::sha256_path;
use crate::error::{Error, Result};

/// Parses, preprocesses and splits one source file (or taxi-sf directory).
pub fn build_split(format: &SourceFormat, path: &Path, config: &PipelineConfig) -> Result<DatasetSplit> {
    let parsed = parse(format, path)?;
    for r in parsed.rejected.iter().take(5) {
        log::warn!("{}:{}: rejected: {}", path.display(), r.line, r.reason);
    }
    if parsed.records.is_empty() {
        return Err(Error::pipeline(format!(
            "{}: no usable records ({} rejected)",
            path.display(),
            parsed.rejected.len()
        )));
    }
    let pre = preprocess(&parsed.records, config)?;
    let parts = split(&pre.trajectories, &config.split)?;
    let ds = DatasetSplit::new(parts, pre.vocabulary)?;
    let provenance = Provenance {
        format: format.name().to_string(),
        source_name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        source_sha256: sha256_path(path)?,
        config: config.clone(),
        split_rounding: SPLIT_ROUNDING.to_string(),
        rows_rejected: parsed.rejected.len(),
        stages: pre.stages,
        counts: ds.counts(),
    };
    Ok(ds.with_provenance(provenance))
}
