//! On-disk split directory: `train.jsonl`, `valid.jsonl`, `test.jsonl`,
//! `vocab.csv` and `provenance.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LatLon;
use crate::ingest::split::{DatasetSplit, Provenance, SplitParts};
use crate::traj::{LocationId, LocationVocabulary, Point, Trajectory, TrajectoryId};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VALID_FILE: &str = "valid.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const VOCAB_FILE: &str = "vocab.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Serialize, Deserialize)]
struct TrajectoryLine {
    user: String,
    traj: u64,
    points: Vec<(i64, u32)>,
}

pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in trajectories {
        let line = TrajectoryLine {
            user: t.user().to_string(),
            traj: t.id().0,
            points: t.points().iter().map(|p| (p.timestamp, p.location.0)).collect(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: TrajectoryLine =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let points = rec
            .points
            .iter()
            .map(|&(t, l)| Point::new(t, LocationId(l)))
            .collect();
        out.push(
            Trajectory::new(TrajectoryId(rec.traj), rec.user, points)
                .map_err(|e| parse_err(e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn write_vocabulary(path: &Path, vocab: &LocationVocabulary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["id", "lat", "lon", "raw_key"]).map_err(io)?;
    for (id, loc) in vocab.iter() {
        w.write_record([
            id.0.to_string(),
            loc.coord.lat().to_string(),
            loc.coord.lon().to_string(),
            loc.key.clone(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_vocabulary(path: &Path) -> Result<LocationVocabulary> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut vocab = LocationVocabulary::new();
    for (i, row) in rdr.records().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message,
        };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        if row.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", row.len())));
        }
        let id: u32 = row[0].parse().map_err(|_| parse_err("bad id".into()))?;
        if id as usize != vocab.len() {
            return Err(parse_err(format!("ids must be dense, expected {}", vocab.len())));
        }
        let lat: f64 = row[1].parse().map_err(|_| parse_err("bad lat".into()))?;
        let lon: f64 = row[2].parse().map_err(|_| parse_err("bad lon".into()))?;
        let coord = LatLon::new(lat, lon).map_err(|e| parse_err(e.to_string()))?;
        vocab
            .push(&row[3], coord)
            .map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(vocab)
}

pub fn write_split(dir: &Path, split: &DatasetSplit) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trajectories(&dir.join(TRAIN_FILE), &split.train)?;
    write_trajectories(&dir.join(VALID_FILE), &split.valid)?;
    write_trajectories(&dir.join(TEST_FILE), &split.test)?;
    write_vocabulary(&dir.join(VOCAB_FILE), &split.vocabulary)?;
    if let Some(p) = &split.provenance {
        write_json(&dir.join(PROVENANCE_FILE), p)?;
    }
    Ok(())
}

pub fn read_split(dir: &Path) -> Result<DatasetSplit> {
    for f in [TRAIN_FILE, VALID_FILE, TEST_FILE, VOCAB_FILE] {
        if !dir.join(f).is_file() {
            return Err(Error::input(format!(
                "{} is not a split directory: missing {f}",
                dir.display()
            )));
        }
    }
    let parts = SplitParts {
        train: read_trajectories(&dir.join(TRAIN_FILE))?,
        valid: read_trajectories(&dir.join(VALID_FILE))?,
        test: read_trajectories(&dir.join(TEST_FILE))?,
    };
    let vocab = read_vocabulary(&dir.join(VOCAB_FILE))?;
    let mut split = DatasetSplit::new(parts, vocab)?;
    let prov = dir.join(PROVENANCE_FILE);
    if prov.is_file() {
        split.provenance = Some(read_json::<Provenance>(&prov)?);
    }
    Ok(split)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}
