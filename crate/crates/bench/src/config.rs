use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Spca,
    Scca,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum SolverKind {
    #[serde(rename = "manial-I")]
    #[value(name = "manial-I")]
    ManialI,
    #[serde(rename = "manial-II")]
    #[value(name = "manial-II")]
    ManialII,
    #[serde(rename = "stomanial")]
    Stomanial,
    #[serde(rename = "rsub")]
    Rsub,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::ManialI => "manial-I",
            SolverKind::ManialII => "manial-II",
            SolverKind::Stomanial => "stomanial",
            SolverKind::Rsub => "rsub",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    #[default]
    Relative,
    Absolute,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionKind {
    #[default]
    SameSample,
    Stored,
}

/// One experiment. Synthetic data is generated unless data files are given.
/// For sparse PCA the data is `m × n`; for sparse CCA the views are `m × p`
/// and `m × q`. `m` defaults to 500 for sparse PCA and 200 for sparse CCA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub solver: SolverKind,
    pub m: Option<usize>,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub mu: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub ridge: f64,
    pub data: Option<PathBuf>,
    pub data_x: Option<PathBuf>,
    pub data_y: Option<PathBuf>,
    pub b: f64,
    pub beta0: f64,
    /// Defaults to `1e-8 · dim · r` with `dim` the (first) feature dimension.
    pub tol: Option<f64>,
    pub stop: StopKind,
    pub max_outer: usize,
    pub inner_cap: usize,
    pub batches: usize,
    pub seed: u64,
    /// Seed for synthetic data; follows `seed` when absent.
    pub data_seed: Option<u64>,
    pub storm_b: f64,
    pub correction: CorrectionKind,
    pub gamma0: f64,
    pub rsub_iters: usize,
    /// Subgradient iterations between trace rows.
    pub trace_every: usize,
    /// Subgradient runs stop once the objective reaches this value.
    pub target_objective: Option<f64>,
    pub trace_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub no_timing: bool,
    /// Check builder gradients against finite differences before solving.
    pub strict: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemKind::Spca,
            solver: SolverKind::ManialI,
            m: None,
            n: 100,
            p: 50,
            q: 50,
            r: 5,
            mu: 0.5,
            mu1: 0.2,
            mu2: 0.2,
            ridge: manial_core::problems::DEFAULT_RIDGE,
            data: None,
            data_x: None,
            data_y: None,
            b: 2.0,
            beta0: 1.0,
            tol: None,
            stop: StopKind::Relative,
            max_outer: 60,
            inner_cap: 1_000_000,
            batches: manial_core::problems::DEFAULT_BATCHES,
            seed: 7,
            data_seed: None,
            storm_b: 1.0,
            correction: CorrectionKind::SameSample,
            gamma0: manial_core::problems::DEFAULT_RSUB_GAMMA0,
            rsub_iters: 100_000,
            trace_every: 100,
            target_objective: None,
            trace_path: None,
            summary_path: None,
            no_timing: false,
            strict: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn feature_dim(&self) -> usize {
        match self.problem {
            ProblemKind::Spca => self.n,
            ProblemKind::Scca => self.p,
        }
    }

    pub fn samples(&self) -> usize {
        self.m.unwrap_or(match self.problem {
            ProblemKind::Spca => 500,
            ProblemKind::Scca => 200,
        })
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
            .unwrap_or(1e-8 * self.feature_dim() as f64 * self.r as f64)
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if self.r == 0 {
            return bad("r must be at least 1".into());
        }
        for (name, v) in [("mu", self.mu), ("mu1", self.mu1), ("mu2", self.mu2), ("ridge", self.ridge)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        for (name, v) in [("beta0", self.beta0), ("storm-b", self.storm_b), ("gamma0", self.gamma0)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.b > 1.0) {
            return bad(format!("b must exceed 1, got {}", self.b));
        }
        if !(self.tolerance() > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tolerance()));
        }
        if self.max_outer == 0 || self.inner_cap == 0 || self.rsub_iters == 0 || self.trace_every == 0 {
            return bad("max-outer, inner-cap, rsub-iters and trace-every must be at least 1".into());
        }
        if self.batches == 0 {
            return bad("batches must be at least 1".into());
        }
        match self.problem {
            ProblemKind::Spca if self.data.is_none() && (self.samples() < 2 || self.n == 0) => {
                bad(format!("synthetic sparse PCA needs m >= 2 and n >= 1, got {}x{}", self.samples(), self.n))
            }
            ProblemKind::Scca if self.data_x.is_some() != self.data_y.is_some() => {
                bad("sparse CCA needs both data-x and data-y, or neither".into())
            }
            _ => Ok(()),
        }
    }
}

/// Inserts `-seed<s>` before the extension of `path`.
pub fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}
