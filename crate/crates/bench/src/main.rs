use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use manial_bench::compare::{compare, DEFAULT_GAPS};
use manial_bench::config::{CorrectionKind, ExperimentConfig, ProblemKind, SolverKind, StopKind};
use manial_bench::error::Result;
use manial_bench::runner::{batch_exit_code, run_experiment, run_seeds, RunOutput};

#[derive(Parser)]
#[command(name = "manial", version, about = "Manifold augmented Lagrangian experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver; exit 0 on convergence, 2 when the budget runs out, 1 on error.
    Run(Box<RunArgs>),
    /// Compare traces by oracle calls and time needed to reach objective gaps.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds run in parallel; output files get a -seed<N> suffix.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, value_enum)]
    problem: Option<ProblemKind>,
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    data_x: Option<PathBuf>,
    #[arg(long)]
    data_y: Option<PathBuf>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    stop: Option<StopKind>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    inner_cap: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    storm_b: Option<f64>,
    #[arg(long, value_enum)]
    correction: Option<CorrectionKind>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    rsub_iters: Option<usize>,
    #[arg(long)]
    trace_every: Option<usize>,
    #[arg(long)]
    target_objective: Option<f64>,
    #[arg(long)]
    trace_path: Option<PathBuf>,
    #[arg(long)]
    summary_path: Option<PathBuf>,
    /// Write zero wall times so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
    /// Check gradients against finite differences before solving.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Objective gaps to report.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GAPS)]
    gaps: Vec<f64>,
    /// Reference objective F_M; defaults to the best objective per seed.
    #[arg(long)]
    reference: Option<f64>,
    /// Also write the comparison as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident; $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        let a = &self;
        overlay!(cfg, a; problem, solver, n, p, q, r, mu, mu1, mu2, ridge, b, beta0, stop,
            max_outer, inner_cap, batches, seed, storm_b, correction, gamma0, rsub_iters, trace_every);
        if a.m.is_some() {
            cfg.m = a.m;
        }
        if a.tol.is_some() {
            cfg.tol = a.tol;
        }
        if a.data_seed.is_some() {
            cfg.data_seed = a.data_seed;
        }
        if a.target_objective.is_some() {
            cfg.target_objective = a.target_objective;
        }
        for (dst, src) in [
            (&mut cfg.data, &a.data),
            (&mut cfg.data_x, &a.data_x),
            (&mut cfg.data_y, &a.data_y),
            (&mut cfg.trace_path, &a.trace_path),
            (&mut cfg.summary_path, &a.summary_path),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        cfg.no_timing |= a.no_timing;
        cfg.strict |= a.strict;
        Ok(cfg)
    }
}

fn report(seed: u64, res: &Result<RunOutput>) {
    match res {
        Ok(out) => {
            let s = &out.summary;
            let r = &s.final_residuals;
            println!(
                "seed {seed}: {:?} after {} iterations, objective {:.10}, residuals {:.2e}/{:.2e}/{:.2e}, {} oracle calls, {:.2}s",
                s.termination, s.iterations, s.final_objective, r.eta_p, r.eta_d, r.eta_c, s.oracle_calls, s.seconds
            );
        }
        Err(e) => eprintln!("seed {seed}: error: {e}"),
    }
}

fn run(args: RunArgs) -> i32 {
    let seeds = args.seeds.clone();
    let cfg = match args.into_config().and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if seeds.is_empty() {
        let res = run_experiment(&cfg);
        report(cfg.seed, &res);
        batch_exit_code([&res])
    } else {
        let results = run_seeds(&cfg, &seeds);
        for (seed, res) in &results {
            report(*seed, res);
        }
        batch_exit_code(results.iter().map(|(_, r)| r))
    }
}

fn run_compare(args: CompareArgs) -> i32 {
    let result = compare(&args.traces, &args.gaps, args.reference).and_then(|c| {
        print!("{}", c.to_table());
        if let Some(path) = &args.json {
            std::fs::write(path, serde_json::to_string_pretty(&c)? + "\n")?;
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Run(args) => run(*args),
        Command::Compare(args) => run_compare(args),
    };
    ExitCode::from(code as u8)
}
