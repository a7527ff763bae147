use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::trace::{read_trace, TraceRecord};

pub const DEFAULT_GAPS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// First row whose objective is within a gap of the reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub oracle_calls: u64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub path: PathBuf,
    pub solver: String,
    /// Seed parsed from a `-seed<N>` file name suffix.
    pub seed: Option<u64>,
    pub reference: f64,
    pub final_objective: f64,
    pub best_objective: f64,
    pub hits: Vec<Option<Hit>>,
}

/// Per-solver medians over seeds; a run that never reaches a gap counts
/// as infinitely expensive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverRow {
    pub solver: String,
    pub runs: usize,
    pub median_oracle_calls: Vec<Option<f64>>,
    pub median_seconds: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub gaps: Vec<f64>,
    pub traces: Vec<TraceRow>,
    pub solvers: Vec<SolverRow>,
}

/// Splits a trace file stem `name-seed<N>` into `(name, Some(N))`.
pub fn split_label(path: &Path) -> (String, Option<u64>) {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if let Some((name, seed)) = stem.rsplit_once("-seed") {
        if let Ok(seed) = seed.parse() {
            return (name.to_string(), Some(seed));
        }
    }
    (stem, None)
}

pub fn first_hit(trace: &[TraceRecord], reference: f64, gap: f64) -> Option<Hit> {
    trace.iter().find(|r| r.objective - reference <= gap).map(|r| Hit {
        oracle_calls: r.oracle_calls,
        seconds: r.wall_seconds,
    })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    m.is_finite().then_some(m)
}

/// Reads every trace and measures the cost of reaching each gap.
///
/// Without `reference`, `F_M` is the lowest objective seen in any trace
/// sharing the same seed (or in all unseeded traces).
pub fn compare(paths: &[PathBuf], gaps: &[f64], reference: Option<f64>) -> Result<Comparison> {
    if paths.is_empty() {
        return Err(BenchError::Config("no traces given".into()));
    }
    if gaps.iter().any(|g| !(*g >= 0.0)) {
        return Err(BenchError::Config("gaps must be nonnegative".into()));
    }
    let mut loaded = Vec::new();
    let mut failures = String::new();
    for path in paths {
        match read_trace(path) {
            Ok(t) => loaded.push((path.clone(), t)),
            Err(e) => writeln!(failures, "  {e}").unwrap(),
        }
    }
    if !failures.is_empty() {
        return Err(BenchError::Traces(failures));
    }
    let mut best: BTreeMap<Option<u64>, f64> = BTreeMap::new();
    for (path, t) in &loaded {
        let seed = split_label(path).1;
        let lowest = t.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
        let e = best.entry(seed).or_insert(f64::INFINITY);
        *e = e.min(lowest);
    }
    let traces: Vec<TraceRow> = loaded
        .iter()
        .map(|(path, t)| {
            let (solver, seed) = split_label(path);
            let f_m = reference.unwrap_or(best[&seed]);
            TraceRow {
                path: path.clone(),
                solver,
                seed,
                reference: f_m,
                final_objective: t.last().unwrap().objective,
                best_objective: t.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min),
                hits: gaps.iter().map(|&g| first_hit(t, f_m, g)).collect(),
            }
        })
        .collect();
    let mut groups: BTreeMap<&str, Vec<&TraceRow>> = BTreeMap::new();
    for row in &traces {
        groups.entry(&row.solver).or_default().push(row);
    }
    let solvers = groups
        .into_iter()
        .map(|(solver, rows)| {
            let per_gap = |f: &dyn Fn(&Hit) -> f64| -> Vec<Option<f64>> {
                (0..gaps.len())
                    .map(|i| median(rows.iter().map(|r| r.hits[i].as_ref().map_or(f64::INFINITY, f)).collect()))
                    .collect()
            };
            SolverRow {
                solver: solver.to_string(),
                runs: rows.len(),
                median_oracle_calls: per_gap(&|h| h.oracle_calls as f64),
                median_seconds: per_gap(&|h| h.seconds),
            }
        })
        .collect();
    Ok(Comparison {
        gaps: gaps.to_vec(),
        traces,
        solvers,
    })
}

fn cell(v: Option<String>) -> String {
    v.unwrap_or_else(|| "—".to_string())
}

impl Comparison {
    pub fn solver(&self, name: &str) -> Option<&SolverRow> {
        self.solvers.iter().find(|s| s.solver == name)
    }

    /// Plain-text table: one line per trace, then per-solver medians.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut head = format!("{:<28} {:>6} {:>16} {:>16}", "trace", "seed", "F_M", "final");
        for g in &self.gaps {
            write!(head, " {:>22}", format!("calls/s @ {g:.0e}")).unwrap();
        }
        writeln!(out, "{head}").unwrap();
        for r in &self.traces {
            let name = r.path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let seed = r.seed.map_or("-".to_string(), |s| s.to_string());
            write!(out, "{name:<28} {seed:>6} {:>16.10} {:>16.10}", r.reference, r.final_objective).unwrap();
            for h in &r.hits {
                let c = cell(h.map(|h| format!("{} / {:.3}", h.oracle_calls, h.seconds)));
                write!(out, " {c:>22}").unwrap();
            }
            writeln!(out).unwrap();
        }
        writeln!(out).unwrap();
        let mut head = format!("{:<28} {:>6}", "solver (median)", "runs");
        for g in &self.gaps {
            write!(head, " {:>22}", format!("calls/s @ {g:.0e}")).unwrap();
        }
        writeln!(out, "{head}").unwrap();
        for s in &self.solvers {
            write!(out, "{:<28} {:>6}", s.solver, s.runs).unwrap();
            for (c, t) in s.median_oracle_calls.iter().zip(&s.median_seconds) {
                let c = cell(c.map(|c| format!("{c:.0} / {:.3}", t.unwrap_or(f64::NAN))));
                write!(out, " {c:>22}").unwrap();
            }
            writeln!(out).unwrap();
        }
        out
    }
}
