//! SHA-256 content digests for provenance and run manifests.

use std::fs;
use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, or of a directory as the ordered sequence of
/// `(relative name, file digest)` pairs of its regular files.
pub fn sha256_path(path: &Path) -> Result<String> {
    sha256_path_excluding(path, &[])
}

/// Like [`sha256_path`], ignoring directory entries named in `skip`.
pub fn sha256_path_excluding(path: &Path, skip: &[&str]) -> Result<String> {
    if path.is_dir() {
        let mut names: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .filter(|p| !skip.iter().any(|s| p.file_name().is_some_and(|n| n == *s)))
            .collect();
        names.sort();
        let mut h = Sha256::new();
        for p in names {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            h.update(name.as_bytes());
            h.update([0]);
            h.update(sha256_path(&p)?.as_bytes());
            h.update([b'\n']);
        }
        return Ok(hex::encode(h.finalize()));
    }
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
