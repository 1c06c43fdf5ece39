//! CSV record format, dataset splitting and JSON config files.
//!
//! Records are stored as `id,y,y_hat,a,a_hat,score` with a header row.
//! Labels are `0`/`1`; a blank cell marks an absent optional field. The
//! `a`, `a_hat` and `score` columns may be omitted entirely.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::record::PredictionRecord;

pub const SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: [&str; 6] = ["id", "y", "y_hat", "a", "a_hat", "score"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFile {
    pub path: PathBuf,
    pub schema_version: u32,
    pub record_count: usize,
    pub has_a: bool,
    pub has_a_hat: bool,
    pub has_score: bool,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub file: DatasetFile,
    pub records: Vec<PredictionRecord>,
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_dataset(file, path)
}

/// Parses CSV from any reader; `path` is only used in error messages.
pub fn parse_dataset<R: Read>(reader: R, path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        column(name).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let id_col = required("id")?;
    let y_col = required("y")?;
    let y_hat_col = required("y_hat")?;
    let a_col = column("a");
    let a_hat_col = column("a_hat");
    let score_col = column("score");

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let field = |col: Option<usize>| col.and_then(|c| row.get(c)).unwrap_or("");
        let parse_bit = |name: &str, raw: &str| -> Result<Option<bool>> {
            match raw {
                "" => Ok(None),
                "0" => Ok(Some(false)),
                "1" => Ok(Some(true)),
                other => Err(err(format!("{name} must be 0 or 1, got `{other}`"))),
            }
        };
        let id = field(Some(id_col));
        if id.is_empty() {
            return Err(err("empty id".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(err(format!("duplicate id `{id}`")));
        }
        let y = parse_bit("y", field(Some(y_col)))?.ok_or_else(|| err("y is blank".into()))?;
        let y_hat = parse_bit("y_hat", field(Some(y_hat_col)))?
            .ok_or_else(|| err("y_hat is blank".into()))?;
        let a = parse_bit("a", field(a_col))?;
        let a_hat = parse_bit("a_hat", field(a_hat_col))?;
        let score = match field(score_col) {
            "" => None,
            raw => {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| err(format!("score `{raw}` is not a number")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(err(format!("score {v} outside [0,1]")));
                }
                Some(v)
            }
        };
        records.push(PredictionRecord {
            id: id.to_string(),
            y,
            y_hat,
            a,
            a_hat,
            score,
        });
    }
    let file = DatasetFile {
        path: path.to_path_buf(),
        schema_version: SCHEMA_VERSION,
        record_count: records.len(),
        has_a: records.iter().any(|r| r.a.is_some()),
        has_a_hat: records.iter().any(|r| r.a_hat.is_some()),
        has_score: records.iter().any(|r| r.score.is_some()),
    };
    Ok(Dataset { file, records })
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let file = File::create(path)?;
    write_records(file, records)
}

pub fn write_records<W: Write>(out: W, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    let bit = |v: Option<bool>| match v {
        Some(true) => "1".to_string(),
        Some(false) => "0".to_string(),
        None => String::new(),
    };
    for r in records {
        w.write_record([
            r.id.clone(),
            bit(Some(r.y)),
            bit(Some(r.y_hat)),
            bit(r.a),
            bit(r.a_hat),
            r.score.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Partition sizes in the order (training stand-in, evaluation, common data).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSizes {
    Counts([usize; 3]),
    Fractions([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub sizes: SplitSizes,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    /// Held out for classifier training; unused by the estimators.
    pub train: Vec<PredictionRecord>,
    pub evaluation: Vec<PredictionRecord>,
    pub common: Vec<PredictionRecord>,
}

fn resolve_sizes(sizes: SplitSizes, n: usize) -> Result<[usize; 3]> {
    match sizes {
        SplitSizes::Counts(c) => {
            let sum: usize = c.iter().sum();
            if sum != n {
                return Err(Error::InfeasibleSplit(format!(
                    "counts {c:?} sum to {sum}, input has {n} records"
                )));
            }
            Ok(c)
        }
        SplitSizes::Fractions(f) => {
            if f.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InfeasibleSplit(format!("fractions {f:?} outside [0,1]")));
            }
            let sum: f64 = f.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InfeasibleSplit(format!("fractions {f:?} sum to {sum}")));
            }
            // Largest-remainder rounding.
            let exact: Vec<f64> = f.iter().map(|&v| v * n as f64).collect();
            let mut out = [0usize; 3];
            for (o, &e) in out.iter_mut().zip(&exact) {
                *o = e.floor() as usize;
            }
            let mut order = [0usize, 1, 2];
            order.sort_by(|&i, &j| {
                (exact[j] - exact[j].floor())
                    .partial_cmp(&(exact[i] - exact[i].floor()))
                    .expect("finite")
                    .then(i.cmp(&j))
            });
            let mut left = n - out.iter().sum::<usize>();
            for &i in order.iter().cycle() {
                if left == 0 {
                    break;
                }
                if f[i] > 0.0 {
                    out[i] += 1;
                    left -= 1;
                }
            }
            Ok(out)
        }
    }
}

/// Seeded shuffle, then contiguous slicing. Each part keeps the input order
/// of its members.
pub fn split_dataset(records: &[PredictionRecord], spec: &SplitSpec) -> Result<Partitions> {
    let sizes = resolve_sizes(spec.sizes, records.len())?;
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut parts = Vec::with_capacity(3);
    let mut start = 0;
    for size in sizes {
        let mut part = idx[start..start + size].to_vec();
        part.sort_unstable();
        parts.push(part.into_iter().map(|i| records[i].clone()).collect::<Vec<_>>());
        start += size;
    }
    let common = parts.pop().expect("three parts");
    let evaluation = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok(Partitions {
        train,
        evaluation,
        common,
    })
}

/// Loads a JSON object whose keys mirror command-line flag names.
pub fn load_config(path: impl AsRef<Path>) -> Result<Map<String, Value>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    match serde_json::from_str::<Value>(&text)? {
        Value::Object(map) => Ok(map
            .into_iter()
            .map(|(k, v)| (k.replace('-', "_"), v))
            .collect()),
        _ => Err(Error::Config(format!(
            "{}: top level must be a JSON object",
            path.display()
        ))),
    }
}
