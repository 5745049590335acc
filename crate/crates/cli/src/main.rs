//! `mfopt`: generate instances, solve them, run exact oracles and batch
//! experiments.
//!
//! Exit codes: 0 success, 2 when only infeasible results were produced,
//! 3 for invalid input (bad flags, unreadable or malformed files).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mfopt_core::bench::{run_experiment, ExperimentSpec};
use mfopt_core::error::Error;
use mfopt_core::generate::{gen_kp_strong, gen_qkp, KpGenSpec, QkpGenSpec};
use mfopt_core::instance::{ProblemInstance, ProblemKind};
use mfopt_core::io::{read_instance, to_native_string};
use mfopt_core::oracle::{brute_force, kp_dp};
use mfopt_core::solver::{solve, CandidateMode, SolveConfig};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "mfopt", version, about = "Mean-field solver for constrained binary optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance.
    Gen(GenArgs),
    /// Solve one instance file and print a JSON report.
    Solve(SolveArgs),
    /// Run a batch experiment and write CSV files.
    Bench(BenchArgs),
    /// Solve one instance file exactly.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Kp,
    Qkp,
    Generic,
}

impl From<Kind> for ProblemKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Kp => ProblemKind::Kp,
            Kind::Qkp => ProblemKind::Qkp,
            Kind::Generic => ProblemKind::Generic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Round,
    Sample,
    Both,
}

impl From<Mode> for CandidateMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Round => CandidateMode::Round,
            Mode::Sample => CandidateMode::Sample,
            Mode::Both => CandidateMode::Both,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// `generic` writes a KP instance in polynomial form.
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Off-diagonal fill for QKP.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Seconds.
    #[arg(long = "time-limit")]
    time_limit: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// `generic` forces the polynomial path.
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverFlags,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Problem sizes, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Leave timing columns blank.
    #[arg(long = "no-timing")]
    no_timing: bool,
    #[command(flatten)]
    solver: SolverFlags,
    /// Aggregate CSV; the raw rows go next to it as `<stem>.raw.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    instance: PathBuf,
    /// Result file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A command either succeeds, finishes with only infeasible results, or fails.
enum Outcome {
    Ok,
    Infeasible,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(EXIT_INFEASIBLE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn cmd_gen(a: GenArgs) -> Result<Outcome, Error> {
    let inst = match a.kind {
        Kind::Qkp => gen_qkp(&QkpGenSpec::new(a.n, a.density, a.seed))?,
        Kind::Kp => gen_kp_strong(&KpGenSpec::new(a.n, a.seed))?,
        Kind::Generic => gen_kp_strong(&KpGenSpec::new(a.n, a.seed))?.to_generic(),
    };
    emit(a.out.as_deref(), &to_native_string(&inst))?;
    Ok(Outcome::Ok)
}

fn apply_flags(f: &SolverFlags, mut cfg: SolveConfig) -> SolveConfig {
    cfg.tol = f.tol.unwrap_or(cfg.tol);
    cfg.max_outer_iters = f.max_iters.unwrap_or(cfg.max_outer_iters);
    cfg.time_limit = f.time_limit.or(cfg.time_limit);
    cfg.alpha = f.alpha.or(cfg.alpha);
    cfg.mode = f.mode.map_or(cfg.mode, CandidateMode::from);
    cfg
}

fn cmd_solve(a: SolveArgs) -> Result<Outcome, Error> {
    let mut inst = read_instance(&a.instance)?;
    match a.kind.map(ProblemKind::from) {
        None => {}
        Some(ProblemKind::Generic) => inst = inst.to_generic(),
        Some(k) if k == inst.kind() => {}
        Some(k) => {
            return Err(Error::Validation(format!(
                "instance is {}, cannot solve it as {k}",
                inst.kind()
            )))
        }
    }
    let cfg = apply_flags(&a.solver, SolveConfig { seed: a.seed, ..SolveConfig::default() });
    let report = solve(&inst, &cfg)?;
    emit(a.out.as_deref(), &json(&report))?;
    Ok(if report.feasible { Outcome::Ok } else { Outcome::Infeasible })
}

fn cmd_bench(a: BenchArgs) -> Result<Outcome, Error> {
    let mut spec = match (&a.config, a.kind) {
        (Some(path), _) => ExperimentSpec::load(path)?,
        (None, Some(kind)) => ExperimentSpec::new(kind.into(), Vec::new()),
        (None, None) => return Err(Error::Validation("bench needs --config or --kind".into())),
    };
    if let Some(k) = a.kind {
        spec.kind = k.into();
    }
    if !a.n.is_empty() {
        spec.sizes = a.n.clone();
    }
    spec.instances = a.instances.unwrap_or(spec.instances);
    spec.runs = a.runs.unwrap_or(spec.runs);
    spec.master_seed = a.seed.unwrap_or(spec.master_seed);
    spec.density = a.density.unwrap_or(spec.density);
    spec.workers = a.workers.unwrap_or(spec.workers);
    if a.no_timing {
        spec.record_timing = false;
    }
    if a.out.is_some() {
        spec.out = a.out.clone();
        spec.raw_out = None;
    }
    let f = &a.solver;
    spec.time_limit = f.time_limit.or(spec.time_limit);
    spec.solver.tol = f.tol.or(spec.solver.tol);
    spec.solver.max_outer_iters = f.max_iters.or(spec.solver.max_outer_iters);
    spec.solver.alpha = f.alpha.or(spec.solver.alpha);
    spec.solver.mode = f.mode.map(CandidateMode::from).or(spec.solver.mode);

    let out = run_experiment(&spec)?;
    let mut stdout = io::stdout().lock();
    for s in &out.stats {
        let ratio = s.mean_ratio.map_or("-".into(), |r| format!("{r:.4}"));
        let rsd = s.rsd_percent.map_or("-".into(), |r| format!("{r:.3}"));
        writeln!(
            stdout,
            "n={} runs={} feasible={} mean_ratio={ratio} mean_best={} rsd%={rsd}",
            s.size, s.runs, s.feasible_runs, s.mean_best
        )?;
    }
    Ok(if out.raw.iter().any(|r| r.feasible) { Outcome::Ok } else { Outcome::Infeasible })
}

fn exact(inst: &ProblemInstance) -> Result<mfopt_core::oracle::OracleResult, Error> {
    if inst.kind() == ProblemKind::Kp {
        match kp_dp(inst) {
            Err(Error::Refused(_)) => brute_force(inst),
            r => r,
        }
    } else {
        brute_force(inst)
    }
}

fn cmd_oracle(a: OracleArgs) -> Result<Outcome, Error> {
    let inst = read_instance(&a.instance)?;
    let r = exact(&inst)?;
    emit(a.out.as_deref(), &json(&r))?;
    Ok(if r.is_feasible() { Outcome::Ok } else { Outcome::Infeasible })
}
