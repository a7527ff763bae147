use std::path::Path;
use std::time::Instant;

use manial_core::alm::{self, AlmConfig, InnerOption, KktResiduals, OuterRecord, StopMode, Termination};
use manial_core::alf::CompositeProblem;
use manial_core::error::Error as CoreError;
use manial_core::manifold::ManifoldPoint;
use manial_core::problems::{self, build_scca, build_spca, gen_scca_data, gen_spca_data, load_matrix};
use manial_core::subsolvers::Correction;
use serde::{Deserialize, Serialize};

use crate::config::{seeded_path, CorrectionKind, ExperimentConfig, ProblemKind, SolverKind, StopKind};
use crate::error::{BenchError, Result};
use crate::trace::{join_flags, write_trace_file, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    BudgetExhausted,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Converged => 0,
            Outcome::BudgetExhausted => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub eta_p: f64,
    pub eta_d: f64,
    #[serde(rename = "eta_C")]
    pub eta_c: f64,
}

impl From<KktResiduals> for Residuals {
    fn from(r: KktResiduals) -> Self {
        Residuals {
            eta_p: r.eta_p,
            eta_d: r.eta_d,
            eta_c: r.eta_c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: ProblemKind,
    pub solver: SolverKind,
    pub seed: u64,
    pub tol: f64,
    pub final_objective: f64,
    pub final_residuals: Residuals,
    pub oracle_calls: u64,
    pub seconds: f64,
    pub iterations: u64,
    pub termination: Outcome,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: Summary,
}

/// Builds the problem instance described by `cfg`.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<CompositeProblem> {
    let seed = cfg.data_seed();
    let p = match cfg.problem {
        ProblemKind::Spca => {
            let data = match &cfg.data {
                Some(path) => load_matrix(path)?,
                None => gen_spca_data(cfg.samples(), cfg.n, seed)?,
            };
            build_spca(data, cfg.mu, cfg.r, cfg.batches)?
        }
        ProblemKind::Scca => {
            let (xd, yd) = match (&cfg.data_x, &cfg.data_y) {
                (Some(px), Some(py)) => (load_matrix(px)?, load_matrix(py)?),
                _ => gen_scca_data(cfg.samples(), cfg.p, cfg.q, cfg.r, seed)?,
            };
            build_scca(xd, yd, cfg.mu1, cfg.mu2, cfg.r, cfg.ridge, cfg.batches)?
        }
    };
    if cfg.strict {
        problems::validate_problem(&p, 5, seed)?;
    }
    Ok(p)
}

pub fn alm_config(cfg: &ExperimentConfig) -> AlmConfig {
    AlmConfig {
        option: match cfg.solver {
            SolverKind::ManialI => InnerOption::I,
            _ => InnerOption::II,
        },
        b: cfg.b,
        beta0: cfg.beta0,
        tol: cfg.tolerance(),
        stop: match cfg.stop {
            StopKind::Relative => StopMode::Relative,
            StopKind::Absolute => StopMode::Absolute,
        },
        max_outer: cfg.max_outer,
        inner_cap: cfg.inner_cap,
        seed: cfg.seed,
        correction: match cfg.correction {
            CorrectionKind::SameSample => Correction::SameSample,
            CorrectionKind::Stored => Correction::Stored,
        },
        storm_b: cfg.storm_b,
        ..AlmConfig::default()
    }
}

pub fn outer_to_trace(r: &OuterRecord, timing: bool) -> TraceRecord {
    let mut flags = Vec::new();
    if r.capped {
        flags.push("capped");
    }
    if r.g_raised {
        flags.push("g-raised");
    }
    if r.unverified {
        flags.push("unverified");
    }
    TraceRecord {
        k: r.k as u64,
        oracle_calls: r.grad_evals,
        wall_seconds: if timing { r.wall_seconds } else { 0.0 },
        objective: r.objective,
        eta_p: r.residuals.eta_p,
        eta_d: r.residuals.eta_d,
        eta_c: r.residuals.eta_c,
        sigma: r.sigma,
        beta: r.beta,
        z_norm: r.z_norm,
        inner_iters: r.inner_iters,
        flags: join_flags(&flags),
        prox_calls: r.prox_calls,
        retraction_calls: r.retractions,
    }
}

/// Runs one solver on a built problem without touching the filesystem.
pub fn solve(p: &CompositeProblem, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let timing = !cfg.no_timing;
    let (trace, outcome, residuals) = match cfg.solver {
        SolverKind::Rsub => run_rsub(p, cfg)?,
        solver => {
            let acfg = alm_config(cfg);
            let res = if solver == SolverKind::Stomanial {
                alm::stomanial(p, &acfg)?
            } else {
                alm::manial(p, &acfg)?
            };
            let trace: Vec<TraceRecord> = res.records.iter().map(|r| outer_to_trace(r, timing)).collect();
            let outcome = match res.termination {
                Termination::Converged => Outcome::Converged,
                Termination::MaxOuter => Outcome::BudgetExhausted,
            };
            (trace, outcome, res.last().residuals.into())
        }
    };
    let last = trace.last().expect("solvers emit at least one row");
    let summary = Summary {
        problem: cfg.problem,
        solver: cfg.solver,
        seed: cfg.seed,
        tol: cfg.tolerance(),
        final_objective: last.objective,
        final_residuals: residuals,
        oracle_calls: last.oracle_calls,
        seconds: last.wall_seconds,
        iterations: last.k,
        termination: outcome,
    };
    Ok(RunOutput { trace, summary })
}

/// Subgradient baseline. Rows are written every `trace_every` steps with
/// `y = Ax` and the multiplier `z = −s`, `s` the sign subgradient at `Ax`.
/// Stops when the objective reaches `target_objective` or the residuals
/// reach the tolerance.
fn run_rsub(p: &CompositeProblem, cfg: &ExperimentConfig) -> Result<(Vec<TraceRecord>, Outcome, Residuals)> {
    let start = Instant::now();
    let clock = || if cfg.no_timing { 0.0 } else { start.elapsed().as_secs_f64() };
    let tol = cfg.tolerance();
    let done = |row: &TraceRecord| cfg.target_objective.is_some_and(|f| row.objective <= f) || row.max_residual() <= tol;
    let mut x = p.manifold.random_point(cfg.seed);
    let mut trace = vec![rsub_row(p, &x, 0, clock())?];
    if done(&trace[0]) {
        let res = residuals_of(&trace[0]);
        return Ok((trace, Outcome::Converged, res));
    }
    for t in 0..cfg.rsub_iters {
        x = problems::rsub_step(p, &x, cfg.gamma0 / ((t + 1) as f64).sqrt())?;
        let steps = t + 1;
        if steps % cfg.trace_every == 0 || steps == cfg.rsub_iters {
            let row = rsub_row(p, &x, steps, clock())?;
            let stop = done(&row);
            trace.push(row);
            if stop {
                let res = residuals_of(trace.last().unwrap());
                return Ok((trace, Outcome::Converged, res));
            }
        }
    }
    let res = residuals_of(trace.last().unwrap());
    Ok((trace, Outcome::BudgetExhausted, res))
}

fn residuals_of(row: &TraceRecord) -> Residuals {
    Residuals {
        eta_p: row.eta_p,
        eta_d: row.eta_d,
        eta_c: row.eta_c,
    }
}

fn rsub_row(p: &CompositeProblem, x: &ManifoldPoint, steps: usize, wall_seconds: f64) -> Result<TraceRecord> {
    let ax = p.map.apply(x.value());
    let z = p.h.subgradient(&ax)?.scale(-1.0);
    let res = alm::kkt_residuals(p, x, &ax, &z)?;
    let objective = p.objective(x.value())?;
    if !objective.is_finite() {
        return Err(CoreError::NonFinite(format!("objective at subgradient step {steps}")).into());
    }
    let t = steps as u64;
    Ok(TraceRecord {
        k: t,
        oracle_calls: t,
        wall_seconds,
        objective,
        eta_p: res.eta_p,
        eta_d: res.eta_d,
        eta_c: res.eta_c,
        sigma: 0.0,
        beta: 0.0,
        z_norm: z.norm(),
        inner_iters: t,
        flags: join_flags(&[]),
        prox_calls: 0,
        retraction_calls: t,
    })
}

/// Builds, solves, and writes the trace and summary files named in `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let p = build_problem(cfg)?;
    let out = solve(&p, cfg)?;
    if let Some(path) = &cfg.trace_path {
        write_trace_file(path, &out.trace)?;
    }
    if let Some(path) = &cfg.summary_path {
        write_summary(path, &out.summary)?;
    }
    Ok(out)
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text + "\n").map_err(|e| BenchError::Trace {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Runs one experiment per seed on worker threads. Output paths get a
/// `-seed<s>` suffix; the data seed follows each run's seed unless fixed.
pub fn run_seeds(cfg: &ExperimentConfig, seeds: &[u64]) -> Vec<(u64, Result<RunOutput>)> {
    let configs: Vec<ExperimentConfig> = seeds
        .iter()
        .map(|&seed| ExperimentConfig {
            seed,
            trace_path: cfg.trace_path.as_deref().map(|p| seeded_path(p, seed)),
            summary_path: cfg.summary_path.as_deref().map(|p| seeded_path(p, seed)),
            ..cfg.clone()
        })
        .collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| (c.seed, s.spawn(move || run_experiment(c))))
            .collect();
        handles
            .into_iter()
            .map(|(seed, h)| {
                let res = h
                    .join()
                    .unwrap_or_else(|_| Err(BenchError::Config(format!("run for seed {seed} panicked"))));
                (seed, res)
            })
            .collect()
    })
}

/// Process exit code for a batch of runs: 1 if any failed, else 2 if any
/// ran out of budget, else 0.
pub fn batch_exit_code<'a>(results: impl IntoIterator<Item = &'a Result<RunOutput>>) -> i32 {
    let mut code = 0;
    for r in results {
        match r {
            Err(_) => return 1,
            Ok(out) => code = code.max(out.summary.termination.exit_code()),
        }
    }
    code
}
