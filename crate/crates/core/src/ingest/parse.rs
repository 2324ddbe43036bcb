//! Readers for the published dataset layouts.
//!
//! Every reader yields [`RawRecord`]s in file order. Rows that cannot be
//! interpreted are collected as [`Rejection`]s; the whole parse fails only
//! when more than half of the rows are rejected.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LatLon;

/// Sampling period of the Porto taxi polylines, in seconds.
pub const PORTO_SAMPLING_SECS: i64 = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user: String,
    pub timestamp: i64,
    pub coord: LatLon,
    pub venue: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<RawRecord>,
    pub rejected: Vec<Rejection>,
    /// Number of data rows examined (excluding headers).
    pub rows: usize,
}

impl ParseOutcome {
    fn check_rejection_rate(self, origin: &str) -> Result<Self> {
        if self.rows > 0 && self.rejected.len() * 2 > self.rows {
            let first = &self.rejected[0];
            return Err(Error::input(format!(
                "{origin}: {} of {} rows rejected (first at line {}: {})",
                self.rejected.len(),
                self.rows,
                first.line,
                first.reason
            )));
        }
        Ok(self)
    }

    fn reject(&mut self, line: usize, reason: impl Into<String>) {
        self.rejected.push(Rejection {
            line,
            reason: reason.into(),
        });
    }
}

/// Column names for the generic CSV reader.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenericColumns {
    pub user: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    pub venue: Option<String>,
    pub delimiter: char,
}

impl Default for GenericColumns {
    fn default() -> Self {
        Self {
            user: "user".into(),
            timestamp: "timestamp".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            venue: Some("venue".into()),
            delimiter: ',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceFormat {
    Gowalla,
    Foursquare,
    TaxiPorto,
    TaxiSf,
    GenericCsv(GenericColumns),
}

impl FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gowalla" => Ok(Self::Gowalla),
            "foursquare" => Ok(Self::Foursquare),
            "taxi-porto" => Ok(Self::TaxiPorto),
            "taxi-sf" => Ok(Self::TaxiSf),
            "generic-csv" => Ok(Self::GenericCsv(GenericColumns::default())),
            other => Err(Error::input(format!(
                "unknown source format {other:?} (expected gowalla, foursquare, taxi-porto, taxi-sf or generic-csv)"
            ))),
        }
    }
}

impl SourceFormat {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gowalla => "gowalla",
            Self::Foursquare => "foursquare",
            Self::TaxiPorto => "taxi-porto",
            Self::TaxiSf => "taxi-sf",
            Self::GenericCsv(_) => "generic-csv",
        }
    }
}

/// Parses `path` according to `format`. For `taxi-sf`, `path` may be a
/// single cab log or a directory of them.
pub fn parse(format: &SourceFormat, path: &Path) -> Result<ParseOutcome> {
    let origin = path.display().to_string();
    if let SourceFormat::TaxiSf = format {
        if path.is_dir() {
            return parse_taxi_sf_dir(path);
        }
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        SourceFormat::TaxiSf => parse_taxi_sf(&cab_name(path), file, &origin),
        _ => parse_reader(format, file, &origin),
    }
}

/// Parses a single stream. `taxi-sf` streams take their cab id from
/// `origin`'s file stem.
pub fn parse_reader<R: Read>(format: &SourceFormat, reader: R, origin: &str) -> Result<ParseOutcome> {
    match format {
        SourceFormat::Gowalla => parse_checkins(reader, origin, CheckinLayout::Gowalla),
        SourceFormat::Foursquare => parse_checkins(reader, origin, CheckinLayout::Foursquare),
        SourceFormat::TaxiPorto => parse_taxi_porto(reader, origin),
        SourceFormat::TaxiSf => parse_taxi_sf(&cab_name(Path::new(origin)), reader, origin),
        SourceFormat::GenericCsv(cols) => parse_generic(reader, origin, cols),
    }
}

fn cab_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.strip_prefix("new_").unwrap_or(&stem).to_string()
}

fn coord(lat: &str, lon: &str) -> std::result::Result<LatLon, String> {
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|_| format!("unparseable latitude {lat:?}"))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|_| format!("unparseable longitude {lon:?}"))?;
    LatLon::new(lat, lon).map_err(|e| format!("coordinate out of range: {e}"))
}

/// Accepts integer epoch seconds, RFC 3339, or the Foursquare
/// `Tue Apr 03 18:00:09 +0000 2012` layout.
pub fn parse_timestamp(s: &str) -> std::result::Result<i64, String> {
    let s = s.trim();
    let ts = if let Ok(v) = s.parse::<i64>() {
        v
    } else if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.timestamp()
    } else if let Ok(dt) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        dt.timestamp()
    } else {
        return Err(format!("unparseable timestamp {s:?}"));
    };
    if ts < 0 {
        return Err(format!("negative timestamp {ts}"));
    }
    Ok(ts)
}

#[derive(Clone, Copy)]
enum CheckinLayout {
    Gowalla,
    Foursquare,
}

/// Check-in TSV. Gowalla rows are `user, time, lat, lon, venue`; Foursquare
/// rows are either the same five columns or the eight-column TSMC2014 layout
/// `user, venue, category-id, category, lat, lon, tz-offset, utc-time`.
fn parse_checkins<R: Read>(reader: R, origin: &str, layout: CheckinLayout) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    let reader = BufReader::new(reader);
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        out.rows += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let parsed = match (layout, cols.len()) {
            (_, 5) => checkin_row(cols[0], cols[1], cols[2], cols[3], cols[4]),
            (CheckinLayout::Foursquare, 8) => {
                checkin_row(cols[0], cols[7], cols[4], cols[5], cols[1])
            }
            (_, n) => Err(format!("expected tab-separated check-in row, found {n} columns")),
        };
        match parsed {
            Ok(r) => out.records.push(r),
            Err(reason) => {
                // A header line is tolerated only as the first row.
                if lineno == 1 && out.records.is_empty() {
                    out.rows -= 1;
                    continue;
                }
                out.reject(lineno, reason)
            }
        }
    }
    out.check_rejection_rate(origin)
}

fn checkin_row(
    user: &str,
    time: &str,
    lat: &str,
    lon: &str,
    venue: &str,
) -> std::result::Result<RawRecord, String> {
    let user = user.trim();
    let venue = venue.trim();
    if user.is_empty() {
        return Err("empty user id".into());
    }
    if venue.is_empty() {
        return Err("empty venue id".into());
    }
    Ok(RawRecord {
        user: user.to_string(),
        timestamp: parse_timestamp(time)?,
        coord: coord(lat, lon)?,
        venue: Some(venue.to_string()),
    })
}

fn header_index(headers: &csv::StringRecord, name: &str, origin: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::input(format!("{origin}: header lacks column {name:?}")))
}

/// Porto ECML/PKDD CSV: one trip per row, `POLYLINE` holds `[[lon, lat], ...]`
/// fixes spaced [`PORTO_SAMPLING_SECS`] apart from `TIMESTAMP`.
fn parse_taxi_porto<R: Read>(reader: R, origin: &str) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::input(format!("{origin}: malformed header: {e}")))?
        .clone();
    let taxi = header_index(&headers, "TAXI_ID", origin)?;
    let time = header_index(&headers, "TIMESTAMP", origin)?;
    let poly = header_index(&headers, "POLYLINE", origin)?;

    let mut out = ParseOutcome::default();
    for (i, row) in rdr.records().enumerate() {
        let lineno = i + 2;
        out.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.reject(lineno, format!("malformed row: {e}"));
                continue;
            }
        };
        match porto_row(&row, taxi, time, poly) {
            Ok(mut recs) => out.records.append(&mut recs),
            Err(reason) => out.reject(lineno, reason),
        }
    }
    out.check_rejection_rate(origin)
}

fn porto_row(
    row: &csv::StringRecord,
    taxi: usize,
    time: usize,
    poly: usize,
) -> std::result::Result<Vec<RawRecord>, String> {
    let user = row.get(taxi).unwrap_or("").trim();
    if user.is_empty() {
        return Err("empty TAXI_ID".into());
    }
    let t0 = parse_timestamp(row.get(time).unwrap_or(""))?;
    let fixes: Vec<[f64; 2]> = serde_json::from_str(row.get(poly).unwrap_or(""))
        .map_err(|e| format!("unparseable POLYLINE: {e}"))?;
    if fixes.is_empty() {
        return Err("empty POLYLINE".into());
    }
    fixes
        .iter()
        .enumerate()
        .map(|(k, [lon, lat])| {
            Ok(RawRecord {
                user: user.to_string(),
                timestamp: t0 + PORTO_SAMPLING_SECS * k as i64,
                coord: LatLon::new(*lat, *lon).map_err(|e| format!("fix {k}: {e}"))?,
                venue: None,
            })
        })
        .collect()
}

/// Cabspotting log: `lat lon occupancy unix-time` per line.
fn parse_taxi_sf<R: Read>(cab: &str, reader: R, origin: &str) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.rows += 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        let rec = if cols.len() != 4 {
            Err(format!("expected 4 space-separated columns, found {}", cols.len()))
        } else {
            coord(cols[0], cols[1]).and_then(|c| {
                Ok(RawRecord {
                    user: cab.to_string(),
                    timestamp: parse_timestamp(cols[3])?,
                    coord: c,
                    venue: None,
                })
            })
        };
        match rec {
            Ok(r) => out.records.push(r),
            Err(reason) => out.reject(i + 1, reason),
        }
    }
    out.check_rejection_rate(origin)
}

fn parse_taxi_sf_dir(dir: &Path) -> Result<ParseOutcome> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name()
                    .map(|n| {
                        let n = n.to_string_lossy();
                        n.starts_with("new_") && n.ends_with(".txt")
                    })
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::input(format!(
            "{}: no new_<cab>.txt logs found",
            dir.display()
        )));
    }
    let mut out = ParseOutcome::default();
    for f in files {
        let file = File::open(&f).map_err(|e| Error::io(&f, e))?;
        let mut part = parse_taxi_sf(&cab_name(&f), file, &f.display().to_string())?;
        out.rows += part.rows;
        out.records.append(&mut part.records);
        out.rejected.append(&mut part.rejected);
    }
    Ok(out)
}

fn parse_generic<R: Read>(reader: R, origin: &str, cols: &GenericColumns) -> Result<ParseOutcome> {
    if !cols.delimiter.is_ascii() {
        return Err(Error::input("generic CSV delimiter must be ASCII"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(cols.delimiter as u8)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::input(format!("{origin}: malformed header: {e}")))?
        .clone();
    let user = header_index(&headers, &cols.user, origin)?;
    let time = header_index(&headers, &cols.timestamp, origin)?;
    let lat = header_index(&headers, &cols.lat, origin)?;
    let lon = header_index(&headers, &cols.lon, origin)?;
    let venue = match &cols.venue {
        Some(name) => headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name)),
        None => None,
    };

    let mut out = ParseOutcome::default();
    for (i, row) in rdr.records().enumerate() {
        let lineno = i + 2;
        out.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.reject(lineno, format!("malformed row: {e}"));
                continue;
            }
        };
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let rec = (|| {
            let u = field(user).trim();
            if u.is_empty() {
                return Err("empty user id".to_string());
            }
            Ok(RawRecord {
                user: u.to_string(),
                timestamp: parse_timestamp(field(time))?,
                coord: coord(field(lat), field(lon))?,
                venue: venue
                    .map(|v| field(v).trim().to_string())
                    .filter(|v| !v.is_empty()),
            })
        })();
        match rec {
            Ok(r) => out.records.push(r),
            Err(reason) => out.reject(lineno, reason),
        }
    }
    out.check_rejection_rate(origin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic(src: &str) -> Result<ParseOutcome> {
        parse_reader(
            &SourceFormat::GenericCsv(GenericColumns::default()),
            src.as_bytes(),
            "mem",
        )
    }

    #[test]
    fn well_formed_generic_csv() {
        let src = "user,timestamp,lat,lon,venue\n\
                   a,100,40.7,-74.0,v1\n\
                   a,200,40.8,-74.1,v2\n\
                   b,300,40.9,-74.2,v1\n";
        let out = generic(src).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.rejected.is_empty());
        assert_eq!(out.records[1].timestamp, 200);
        assert_eq!(out.records[2].venue.as_deref(), Some("v1"));
    }

    #[test]
    fn out_of_range_latitude_is_rejected_with_reason() {
        let src = "user,timestamp,lat,lon,venue\n\
                   a,100,95,-74.0,v1\n\
                   a,200,40.8,-74.1,v2\n\
                   a,300,40.8,-74.1,v2\n";
        let out = generic(src).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].line, 2);
        assert!(out.rejected[0].reason.contains("out of range"), "{:?}", out.rejected);
    }

    #[test]
    fn majority_rejection_is_fatal() {
        let src = "user,timestamp,lat,lon,venue\n\
                   a,x,40,-74,v\n\
                   a,y,40,-74,v\n\
                   a,1,40,-74,v\n";
        assert!(matches!(generic(src), Err(Error::Input(_))));
    }

    #[test]
    fn missing_header_column_is_an_error() {
        let src = "who,when,lat,lon\nx,1,2,3\n";
        let err = generic(src).unwrap_err();
        assert!(err.to_string().contains("user"), "{err}");
    }

    #[test]
    fn unknown_format_is_an_error() {
        assert!("brightkite".parse::<SourceFormat>().is_err());
        assert_eq!("taxi-porto".parse::<SourceFormat>().unwrap(), SourceFormat::TaxiPorto);
    }

    #[test]
    fn porto_polyline_expands_at_fifteen_seconds() {
        let src = "\"TRIP_ID\",\"CALL_TYPE\",\"ORIGIN_CALL\",\"ORIGIN_STAND\",\"TAXI_ID\",\"TIMESTAMP\",\"DAY_TYPE\",\"MISSING_DATA\",\"POLYLINE\"\n\
                   \"1372636858620000589\",\"C\",\"\",\"\",\"20000589\",\"1372636858\",\"A\",\"False\",\"[[-8.618643,41.141412],[-8.618499,41.141376],[-8.620326,41.14251],[-8.622153,41.143815]]\"\n";
        let out = parse_reader(&SourceFormat::TaxiPorto, src.as_bytes(), "porto.csv").unwrap();
        let ts: Vec<i64> = out.records.iter().map(|r| r.timestamp).collect();
        let t0 = 1372636858;
        assert_eq!(ts, vec![t0, t0 + 15, t0 + 30, t0 + 45]);
        assert!(out.records.iter().all(|r| r.user == "20000589" && r.venue.is_none()));
        assert_eq!(out.records[0].coord.lat(), 41.141412);
        assert_eq!(out.records[0].coord.lon(), -8.618643);
    }

    #[test]
    fn gowalla_rows() {
        let src = "0\t2010-10-19T23:55:27Z\t30.2359091167\t-97.7951395833\t22847\n\
                   0\t2010-10-18T22:17:43Z\t30.2691029532\t-97.7493953705\t420315\n";
        let out = parse_reader(&SourceFormat::Gowalla, src.as_bytes(), "g").unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].timestamp, 1287532527);
        assert_eq!(out.records[1].venue.as_deref(), Some("420315"));
    }

    #[test]
    fn foursquare_tsmc_rows() {
        let src = "470\t49bbd6c0f964a520f4531fe3\t4bf58dd8d48988d127951735\tArts & Crafts Store\t40.719810375488535\t-74.00258103213994\t-240\tTue Apr 03 18:00:09 +0000 2012\n";
        let out = parse_reader(&SourceFormat::Foursquare, src.as_bytes(), "f").unwrap();
        let r = &out.records[0];
        assert_eq!(r.user, "470");
        assert_eq!(r.venue.as_deref(), Some("49bbd6c0f964a520f4531fe3"));
        assert_eq!(r.timestamp, 1333476009);
        assert_eq!(r.coord.lat(), 40.719810375488535);
    }

    #[test]
    fn taxi_sf_log() {
        let src = "37.75134 -122.39488 0 1213084687\n37.75136 -122.39527 0 1213084659\n";
        let out = parse_reader(&SourceFormat::TaxiSf, src.as_bytes(), "new_abboip.txt").unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].user, "abboip");
        assert_eq!(out.records[1].timestamp, 1213084659);
    }

    #[test]
    fn timestamp_layouts() {
        assert_eq!(parse_timestamp("42").unwrap(), 42);
        assert_eq!(parse_timestamp("1970-01-01T00:01:00Z").unwrap(), 60);
        assert!(parse_timestamp("-5").is_err());
        assert!(parse_timestamp("yesterday").is_err());
    }
}
