use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::record::PredictionRecord;

/// Discloses true sensitive attributes on request.
pub trait AttributeOracle {
    /// Returns the true attribute of each id, in request order.
    fn reveal(&mut self, ids: &[&str]) -> Result<Vec<bool>>;
}

/// Answers from attributes carried alongside the pool.
#[derive(Debug, Clone)]
pub struct InMemoryOracle {
    truth: HashMap<String, bool>,
}

impl InMemoryOracle {
    pub fn from_records(records: &[PredictionRecord]) -> Result<Self> {
        let truth = records
            .iter()
            .map(|r| Ok((r.id.clone(), r.require_a()?)))
            .collect::<Result<_>>()?;
        Ok(Self { truth })
    }
}

impl AttributeOracle for InMemoryOracle {
    fn reveal(&mut self, ids: &[&str]) -> Result<Vec<bool>> {
        ids.iter()
            .map(|id| {
                self.truth
                    .get(*id)
                    .copied()
                    .ok_or_else(|| Error::Oracle(format!("no attribute known for `{id}`")))
            })
            .collect()
    }
}

/// Exchanges request and answer files with an external annotator.
///
/// Round `k` writes `request_{k:04}.csv` (column `id`) into the exchange
/// directory and waits for `answer_{k:04}.csv` (columns `id,a`) covering
/// every requested id.
#[derive(Debug, Clone)]
pub struct FileExchangeOracle {
    dir: PathBuf,
    round: usize,
    poll: Duration,
    timeout: Duration,
}

impl FileExchangeOracle {
    pub fn new(dir: impl Into<PathBuf>, timeout: Duration) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            round: 0,
            poll: Duration::from_millis(20),
            timeout,
        })
    }

    pub fn request_path(dir: &Path, round: usize) -> PathBuf {
        dir.join(format!("request_{round:04}.csv"))
    }

    pub fn answer_path(dir: &Path, round: usize) -> PathBuf {
        dir.join(format!("answer_{round:04}.csv"))
    }

    fn write_request(&self, ids: &[&str]) -> Result<()> {
        let tmp = self.dir.join(format!(".request_{:04}.tmp", self.round));
        {
            let mut w = csv::Writer::from_path(&tmp)?;
            w.write_record(["id"])?;
            for id in ids {
                w.write_record([id])?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, Self::request_path(&self.dir, self.round))?;
        Ok(())
    }

    fn try_read_answer(&self, ids: &[&str]) -> Result<Option<Vec<bool>>> {
        let path = Self::answer_path(&self.dir, self.round);
        if !path.exists() {
            return Ok(None);
        }
        let mut rdr = match csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&path) {
            Ok(r) => r,
            Err(_) => return Ok(None),
        };
        let headers = rdr.headers()?.clone();
        let (Some(id_col), Some(a_col)) = (
            headers.iter().position(|h| h == "id"),
            headers.iter().position(|h| h == "a"),
        ) else {
            return Ok(None);
        };
        let mut answers = HashMap::new();
        for row in rdr.records() {
            let Ok(row) = row else { return Ok(None) };
            let a = match row.get(a_col) {
                Some("0") => false,
                Some("1") => true,
                Some(other) => {
                    return Err(Error::Oracle(format!(
                        "{}: attribute `{other}` must be 0 or 1",
                        path.display()
                    )))
                }
                None => return Ok(None),
            };
            answers.insert(row.get(id_col).unwrap_or("").to_string(), a);
        }
        ids.iter()
            .map(|id| answers.get(*id).copied())
            .collect::<Option<Vec<_>>>()
            .map_or(Ok(None), |v| Ok(Some(v)))
    }
}

impl AttributeOracle for FileExchangeOracle {
    fn reveal(&mut self, ids: &[&str]) -> Result<Vec<bool>> {
        self.round += 1;
        self.write_request(ids)?;
        let start = Instant::now();
        loop {
            if let Some(answer) = self.try_read_answer(ids)? {
                return Ok(answer);
            }
            if start.elapsed() >= self.timeout {
                return Err(Error::Oracle(format!(
                    "timed out waiting for {}",
                    Self::answer_path(&self.dir, self.round).display()
                )));
            }
            std::thread::sleep(self.poll);
        }
    }
}

/// Which ids have been disclosed and how much budget remains.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OracleBudgetState {
    pub revealed: BTreeSet<String>,
    pub queries_used: usize,
    pub budget: Option<usize>,
}

impl OracleBudgetState {
    pub fn new(budget: Option<usize>) -> Self {
        Self {
            budget,
            ..Self::default()
        }
    }

    pub fn remaining(&self) -> usize {
        self.budget
            .map_or(usize::MAX, |b| b.saturating_sub(self.queries_used))
    }

    pub(crate) fn record(&mut self, ids: &[&str]) {
        for id in ids {
            let fresh = self.revealed.insert((*id).to_string());
            debug_assert!(fresh, "id `{id}` revealed twice");
        }
        self.queries_used = self.revealed.len();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_memory_answers_in_request_order() {
        let recs = vec![
            PredictionRecord::new("a", true, true).with_a(true),
            PredictionRecord::new("b", true, true).with_a(false),
        ];
        let mut o = InMemoryOracle::from_records(&recs).unwrap();
        assert_eq!(o.reveal(&["b", "a"]).unwrap(), vec![false, true]);
        assert!(o.reveal(&["zz"]).is_err());
    }

    #[test]
    fn file_exchange_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        let annotator = std::thread::spawn(move || {
            let req = FileExchangeOracle::request_path(&path, 1);
            while !req.exists() {
                std::thread::sleep(Duration::from_millis(5));
            }
            let text = fs::read_to_string(&req).unwrap();
            let mut out = String::from("id,a\n");
            for id in text.lines().skip(1) {
                out.push_str(&format!("{id},{}\n", u8::from(id.ends_with('1'))));
            }
            let tmp = path.join("tmp");
            fs::write(&tmp, out).unwrap();
            fs::rename(tmp, FileExchangeOracle::answer_path(&path, 1)).unwrap();
        });
        let mut o = FileExchangeOracle::new(dir.path(), Duration::from_secs(10)).unwrap();
        assert_eq!(o.reveal(&["x1", "x2", "y1"]).unwrap(), vec![true, false, true]);
        annotator.join().unwrap();
    }

    #[test]
    fn file_exchange_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = FileExchangeOracle::new(dir.path(), Duration::from_millis(50)).unwrap();
        assert!(matches!(o.reveal(&["x"]), Err(Error::Oracle(_))));
        assert!(FileExchangeOracle::request_path(dir.path(), 1).exists());
    }

    #[test]
    fn budget_accounting() {
        let mut s = OracleBudgetState::new(Some(3));
        s.record(&["a", "b"]);
        assert_eq!(s.queries_used, 2);
        assert_eq!(s.remaining(), 1);
    }
}
