//! Result records and their CSV / JSON-lines emission.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Column order of the CSV form.
pub const COLUMNS: [&str; 8] = [
    "algorithm",
    "mask_level",
    "psnr_db",
    "rel_error",
    "wall_s",
    "outer_iters",
    "cycles",
    "seed",
];

/// One algorithm run. `psnr_db` is `+∞` for exact recovery and NaN when the
/// run failed (see `failure`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub algorithm: String,
    pub mask_level: f64,
    #[serde(with = "lossless_f64")]
    pub psnr_db: f64,
    #[serde(with = "lossless_f64")]
    pub rel_error: f64,
    pub wall_s: f64,
    pub outer_iters: usize,
    pub cycles: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default)]
    pub config: serde_json::Value,
}

/// JSON has no infinities; non-finite values travel as strings.
mod lossless_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => f64::from_str(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

impl FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" | "json-lines" => Ok(RecordFormat::Jsonl),
            _ => Err(Error::param(format!("unknown record format {s:?}"))),
        }
    }
}

fn csv_row(r: &ExperimentRecord) -> [String; 8] {
    [
        r.algorithm.clone(),
        r.mask_level.to_string(),
        r.psnr_db.to_string(),
        r.rel_error.to_string(),
        r.wall_s.to_string(),
        r.outer_iters.to_string(),
        r.cycles.to_string(),
        r.seed.to_string(),
    ]
}

/// Writes records to any sink. CSV always carries the header row.
pub fn write_records<W: Write>(records: &[ExperimentRecord], out: W, format: RecordFormat) -> std::io::Result<()> {
    match format {
        RecordFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(COLUMNS)?;
            for r in records {
                w.write_record(csv_row(r))?;
            }
            w.flush()
        }
        RecordFormat::Jsonl => {
            let mut out = out;
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

pub fn emit_records(records: &[ExperimentRecord], path: impl AsRef<Path>, format: RecordFormat) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io { path: path.to_owned(), source };
    let file = File::create(path).map_err(io_err)?;
    write_records(records, BufWriter::new(file), format).map_err(io_err)
}

fn parse_field<T: FromStr>(path: &Path, row: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = row.get(i).unwrap_or_default();
    raw.parse().map_err(|_| Error::Records {
        path: path.to_owned(),
        message: format!("bad {} value {raw:?}", COLUMNS[i]),
    })
}

/// Reads records back. CSV rows come back without failure text or config.
pub fn read_records(path: impl AsRef<Path>, format: RecordFormat) -> Result<Vec<ExperimentRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    let bad = |message: String| Error::Records { path: path.to_owned(), message };
    match format {
        RecordFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
            if header.iter().ne(COLUMNS) {
                return Err(bad(format!("unexpected header {header:?}")));
            }
            let mut out = Vec::new();
            for row in reader.records() {
                let row = row.map_err(|e| bad(e.to_string()))?;
                if row.len() != COLUMNS.len() {
                    return Err(bad(format!("row has {} fields", row.len())));
                }
                out.push(ExperimentRecord {
                    algorithm: row[0].to_owned(),
                    mask_level: parse_field(path, &row, 1)?,
                    psnr_db: parse_field(path, &row, 2)?,
                    rel_error: parse_field(path, &row, 3)?,
                    wall_s: parse_field(path, &row, 4)?,
                    outer_iters: parse_field(path, &row, 5)?,
                    cycles: parse_field(path, &row, 6)?,
                    seed: parse_field(path, &row, 7)?,
                    failure: None,
                    config: serde_json::Value::Null,
                });
            }
            Ok(out)
        }
        RecordFormat::Jsonl => {
            let mut out = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|source| Error::Io { path: path.to_owned(), source })?;
                if line.trim().is_empty() {
                    continue;
                }
                out.push(serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?);
            }
            Ok(out)
        }
    }
}
