//! Kept-iteration records, NDJSON/CSV persistence and chain checkpoints.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::McmcState;
use crate::special::ChainRng;

/// One kept iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub xi: Vec<usize>,
    pub zeta: Vec<usize>,
    pub mu: f64,
    pub sigma2: f64,
    pub tau2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub log_joint: f64,
    pub log_likelihood: f64,
    pub occupied_communities: usize,
    pub occupied_supercommunities: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
}

impl TraceRecord {
    /// Supercommunity label of each vertex, `ζ_{ξ_i}`.
    pub fn vertex_supercommunities(&self) -> Vec<usize> {
        self.xi.iter().map(|&x| self.zeta[x]).collect()
    }
}

/// Post-burn-in, thinned output of one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

const CSV_HEADER: &str = "iteration,mu,sigma2,tau2,alpha,beta,log_joint,log_likelihood,occupied_communities,occupied_supercommunities";

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean of the recorded log joint density; `-inf` when empty.
    pub fn mean_log_joint(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NEG_INFINITY;
        }
        self.records.iter().map(|r| r.log_joint).sum::<f64>() / self.records.len() as f64
    }

    /// Mean of the recorded log-likelihood; `-inf` when empty.
    pub fn mean_log_likelihood(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NEG_INFINITY;
        }
        self.records.iter().map(|r| r.log_likelihood).sum::<f64>() / self.records.len() as f64
    }

    pub fn write_ndjson(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_ndjson(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Self { records })
    }

    /// Scalar columns only.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&scalar_row(r));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn scalar_row(r: &TraceRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        r.iteration,
        r.mu,
        r.sigma2,
        r.tau2,
        r.alpha,
        r.beta,
        r.log_joint,
        r.log_likelihood,
        r.occupied_communities,
        r.occupied_supercommunities
    )
}

/// Everything needed to continue a chain bit-for-bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Number of completed sweeps.
    pub iteration: usize,
    /// Number of records already in the NDJSON file.
    pub records: usize,
    pub state: McmcState,
    pub rng: ChainRng,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string(self)?;
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Appends records to `trace.ndjson` and `trace.csv` as a chain runs.
pub(crate) struct TraceWriter {
    ndjson: BufWriter<File>,
    csv: BufWriter<File>,
    ndjson_path: std::path::PathBuf,
}

impl TraceWriter {
    /// Open for appending, keeping only the first `keep` records of any
    /// existing files.
    pub(crate) fn open(dir: &Path, keep: usize) -> Result<Self> {
        let ndjson_path = dir.join("trace.ndjson");
        let csv_path = dir.join("trace.csv");
        let kept = if keep > 0 && ndjson_path.exists() {
            let trace = Trace::read_ndjson(&ndjson_path)?;
            if trace.len() < keep {
                return Err(Error::Domain(format!(
                    "{} holds {} records but the checkpoint expects {keep}",
                    ndjson_path.display(),
                    trace.len()
                )));
            }
            trace.records[..keep].to_vec()
        } else {
            Vec::new()
        };
        let trace = Trace { records: kept };
        trace.write_ndjson(&ndjson_path)?;
        trace.write_csv(&csv_path)?;
        let open = |p: &Path| {
            fs::OpenOptions::new()
                .append(true)
                .open(p)
                .map(BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        Ok(Self {
            ndjson: open(&ndjson_path)?,
            csv: open(&csv_path)?,
            ndjson_path,
        })
    }

    pub(crate) fn push(&mut self, rec: &TraceRecord) -> Result<()> {
        serde_json::to_writer(&mut self.ndjson, rec)?;
        self.ndjson
            .write_all(b"\n")
            .and_then(|_| self.csv.write_all(scalar_row(rec).as_bytes()))
            .map_err(|e| Error::io(&self.ndjson_path, e))
    }

    pub(crate) fn flush(&mut self) -> Result<()> {
        self.ndjson
            .flush()
            .and_then(|_| self.csv.flush())
            .map_err(|e| Error::io(&self.ndjson_path, e))
    }
}
