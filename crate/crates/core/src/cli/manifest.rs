//! `run_manifest.json`, written once per output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::{sha256_hex, sha256_path_excluding};
use crate::error::{Error, Result};
use crate::ingest::store::{read_json, write_json};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    /// Input path as given → content digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the output directory → content digest.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_secs: f64,
}

/// Content digest of an input, ignoring any manifest it contains.
pub fn input_digest(path: &Path) -> Result<String> {
    sha256_path_excluding(path, &[MANIFEST_FILE])
}

fn collect(dir: &Path, prefix: &str, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .collect();
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = e.file_name().to_string_lossy().into_owned();
        let rel = format!("{prefix}{name}");
        let p = e.path();
        if p.is_dir() {
            collect(&p, &format!("{rel}/"), out)?;
        } else if rel != MANIFEST_FILE {
            out.insert(rel, sha256_path_excluding(&p, &[])?);
        }
    }
    Ok(())
}

impl RunManifest {
    /// Records every file under `out_dir` and writes the manifest there.
    pub fn finish(mut self, out_dir: &Path) -> Result<Self> {
        let mut outputs = BTreeMap::new();
        collect(out_dir, "", &mut outputs)?;
        self.outputs = outputs;
        write_json(&out_dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    /// Digest of everything except the wall time.
    pub fn digest(&self) -> String {
        let mut m = self.clone();
        m.wall_time_secs = 0.0;
        sha256_hex(serde_json::to_string(&m).expect("manifest serializes").as_bytes())
    }
}
