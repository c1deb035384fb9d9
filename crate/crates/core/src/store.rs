//! Append-only JSON-lines sample store and per-(query, year) aggregation.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// One observed hit count with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSample {
    pub query_canonical: String,
    pub year: i32,
    pub count: u64,
    pub observed_at: DateTime<Utc>,
    pub session_id: String,
    pub provider_id: String,
}

/// Mean, sample standard deviation and standard error of the repeated counts
/// of one query in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountStats {
    pub query_canonical: String,
    pub year: i32,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub n: usize,
    pub single_sample: bool,
}

impl CountStats {
    /// Aggregates raw counts. `counts` must be non-empty.
    pub fn from_counts(query_canonical: &str, year: i32, counts: &[f64]) -> CountStats {
        assert!(!counts.is_empty(), "aggregating an empty sample set");
        let n = counts.len();
        // sort so the result does not depend on arrival order
        let mut sorted = counts.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = sorted.iter().map(|c| (c - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        CountStats {
            query_canonical: query_canonical.to_string(),
            year,
            mean,
            std,
            stderr: std / (n as f64).sqrt(),
            n,
            single_sample: n == 1,
        }
    }

    /// Exact counts with no spread, e.g. for oracle comparisons.
    pub fn exact(query_canonical: &str, year: i32, count: f64) -> CountStats {
        Self::from_counts(query_canonical, year, &[count])
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store {path} line {line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("no samples for {query} in {year}")]
    Missing { query: String, year: i32 },
}

/// A JSON-lines file holding one [`RawSample`] per line.
///
/// Records are only ever appended. A trailing line without its newline is an
/// interrupted write and is ignored by readers.
#[derive(Debug, Clone)]
pub struct JsonlStore {
    path: PathBuf,
}

impl JsonlStore {
    /// Opens (creating if needed) the store file.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(JsonlStore { path })
    }

    /// Opens an existing store without creating it.
    pub fn open_existing(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        File::open(&path).map_err(|source| StoreError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(JsonlStore { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.clone(),
            source,
        }
    }

    /// Appends `samples` in order and syncs. On failure the file is truncated
    /// back to its previous length.
    pub fn append_samples(&self, samples: &[RawSample]) -> Result<usize, StoreError> {
        if samples.is_empty() {
            return Ok(0);
        }
        let mut buf = Vec::new();
        for s in samples {
            serde_json::to_writer(&mut buf, s).map_err(|e| self.io(e.into()))?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        let before = f.seek(SeekFrom::End(0)).map_err(|e| self.io(e))?;
        let written = f.write_all(&buf).and_then(|_| f.sync_data());
        if let Err(e) = written {
            let _ = f.set_len(before);
            return Err(self.io(e));
        }
        Ok(samples.len())
    }

    /// All complete records in file order.
    pub fn read_all(&self) -> Result<Vec<RawSample>, StoreError> {
        let f = File::open(&self.path).map_err(|e| self.io(e))?;
        let mut reader = BufReader::new(f);
        let mut out = Vec::new();
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| self.io(e))?;
            if n == 0 || !line.ends_with('\n') {
                break;
            }
            lineno += 1;
            if line.trim().is_empty() {
                continue;
            }
            let s = serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
                path: self.path.clone(),
                line: lineno,
                source,
            })?;
            out.push(s);
        }
        Ok(out)
    }

    pub fn len(&self) -> Result<usize, StoreError> {
        Ok(self.read_all()?.len())
    }

    pub fn is_empty(&self) -> Result<bool, StoreError> {
        Ok(self.len()? == 0)
    }

    /// Pooled statistics for one key, read from disk.
    pub fn aggregate(&self, query_canonical: &str, year: i32) -> Result<CountStats, StoreError> {
        SampleIndex::new(self.read_all()?).aggregate(query_canonical, year)
    }
}

/// In-memory index of samples by (query, year), used by the analysis layer.
#[derive(Debug, Clone, Default)]
pub struct SampleIndex {
    by_key: BTreeMap<(String, i32), Vec<(String, f64)>>,
}

impl SampleIndex {
    pub fn new(samples: impl IntoIterator<Item = RawSample>) -> Self {
        let mut idx = SampleIndex::default();
        idx.extend(samples);
        idx
    }

    pub fn extend(&mut self, samples: impl IntoIterator<Item = RawSample>) {
        for s in samples {
            self.by_key
                .entry((s.query_canonical, s.year))
                .or_default()
                .push((s.session_id, s.count as f64));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    /// Statistics pooled over every session.
    pub fn aggregate(&self, query_canonical: &str, year: i32) -> Result<CountStats, StoreError> {
        self.aggregate_where(query_canonical, year, |_| true)
    }

    /// Statistics restricted to one session label.
    pub fn aggregate_session(
        &self,
        query_canonical: &str,
        year: i32,
        session_id: &str,
    ) -> Result<CountStats, StoreError> {
        self.aggregate_where(query_canonical, year, |s| s == session_id)
    }

    fn aggregate_where(
        &self,
        query_canonical: &str,
        year: i32,
        keep: impl Fn(&str) -> bool,
    ) -> Result<CountStats, StoreError> {
        let counts: Vec<f64> = self
            .by_key
            .get(&(query_canonical.to_string(), year))
            .into_iter()
            .flatten()
            .filter(|(s, _)| keep(s))
            .map(|(_, c)| *c)
            .collect();
        if counts.is_empty() {
            return Err(StoreError::Missing {
                query: query_canonical.to_string(),
                year,
            });
        }
        Ok(CountStats::from_counts(query_canonical, year, &counts))
    }

    pub fn get(&self, query_canonical: &str, year: i32) -> Option<CountStats> {
        self.aggregate(query_canonical, year).ok()
    }

    /// Session labels that contributed samples for the key, sorted.
    pub fn sessions(&self, query_canonical: &str, year: i32) -> Vec<String> {
        let mut out: Vec<String> = self
            .by_key
            .get(&(query_canonical.to_string(), year))
            .into_iter()
            .flatten()
            .map(|(s, _)| s.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }
}
