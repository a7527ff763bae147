use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Column names of a trace file, in order.
pub const TRACE_HEADER: &str =
    "k,oracle_calls,wall_seconds,objective,eta_p,eta_d,eta_C,sigma,beta,z_norm,inner_iters,flags,prox_calls,retraction_calls";

/// One outer iteration (or one sampled subgradient step for `rsub`).
///
/// `oracle_calls` counts Euclidean gradient evaluations of the smooth part
/// (or one of its batches). Prox and retraction calls are tracked in their
/// own columns. `flags` holds `|`-separated markers, `-` when empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    pub oracle_calls: u64,
    pub wall_seconds: f64,
    pub objective: f64,
    pub eta_p: f64,
    pub eta_d: f64,
    #[serde(rename = "eta_C")]
    pub eta_c: f64,
    pub sigma: f64,
    pub beta: f64,
    pub z_norm: f64,
    pub inner_iters: u64,
    pub flags: String,
    pub prox_calls: u64,
    pub retraction_calls: u64,
}

impl TraceRecord {
    pub fn max_residual(&self) -> f64 {
        self.eta_p.max(self.eta_d).max(self.eta_c)
    }

    pub fn flag_list(&self) -> Vec<&str> {
        if self.flags == "-" {
            Vec::new()
        } else {
            self.flags.split('|').collect()
        }
    }
}

pub fn join_flags(flags: &[&str]) -> String {
    if flags.is_empty() {
        "-".to_string()
    } else {
        flags.join("|")
    }
}

pub fn write_trace<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| BenchError::Trace {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    write_trace(BufWriter::new(file), records)
}

/// Parses a trace, checking the header and the ordering of `k` and
/// `oracle_calls`.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let fail = |msg: String| BenchError::Trace {
        path: path.to_path_buf(),
        msg,
    };
    let file = File::open(path).map_err(|e| fail(e.to_string()))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| fail(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(fail(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut records: Vec<TraceRecord> = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let rec: TraceRecord = row.map_err(|e| fail(format!("row {}: {e}", i + 1)))?;
        if let Some(prev) = records.last() {
            if rec.k <= prev.k {
                return Err(fail(format!("row {}: k {} does not increase", i + 1, rec.k)));
            }
            if rec.oracle_calls < prev.oracle_calls {
                return Err(fail(format!("row {}: oracle_calls decreases", i + 1)));
            }
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(fail("trace has no rows".into()));
    }
    Ok(records)
}
