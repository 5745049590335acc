//! Batch experiments: generate instances, solve each one several times with
//! derived seeds, compare against exact optima where available, and write raw
//! and aggregate CSV files.
//!
//! # Seeds
//!
//! Every seed is a counter hash of the master seed:
//! `derive_seed(master, [1, size, instance])` for instance generation and
//! `derive_seed(master, [2, size, instance, run])` for a solver run, where
//! `derive_seed` folds each word into a SplitMix64 state. Any single run can be
//! replayed from the `instance_seed` and `run_seed` columns of the raw file.
//!
//! # Ratios
//!
//! Objectives are minimized, gains are `-objective`. `ratio` is
//! `solver gain / optimal gain`, capped at 1, and 0 for an infeasible run. It
//! is blank when no exact optimum is available (KP uses the dynamic program,
//! other kinds brute force up to 24 variables).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{gen_kp_strong, gen_qkp, KpGenSpec, QkpGenSpec};
use crate::instance::{ProblemInstance, ProblemKind};
use crate::io::read_instance;
use crate::oracle::{brute_force, kp_dp, BRUTE_FORCE_MAX_VARS};
use crate::solver::{solve, CandidateMode, SolveConfig};
use crate::stats::summarize;

pub const CSV_SCHEMA: &str = "mfopt-bench v1";

/// Solver settings an experiment may override; unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOverrides {
    pub tol: Option<f64>,
    pub max_outer_iters: Option<usize>,
    pub restart_neighborhood: Option<f64>,
    pub inner_sweeps: Option<usize>,
    pub mode: Option<CandidateMode>,
    pub samples_per_iter: Option<usize>,
    pub alpha: Option<f64>,
    pub step_size: Option<f64>,
    pub damping: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, base: SolveConfig) -> SolveConfig {
        SolveConfig {
            tol: self.tol.unwrap_or(base.tol),
            max_outer_iters: self.max_outer_iters.unwrap_or(base.max_outer_iters),
            restart_neighborhood: self.restart_neighborhood.unwrap_or(base.restart_neighborhood),
            inner_sweeps: self.inner_sweeps.unwrap_or(base.inner_sweeps),
            mode: self.mode.unwrap_or(base.mode),
            samples_per_iter: self.samples_per_iter.unwrap_or(base.samples_per_iter),
            alpha: self.alpha.or(base.alpha),
            step_size: self.step_size.or(base.step_size),
            damping: self.damping.or(base.damping),
            ..base
        }
    }
}

/// One experiment. Loadable from TOML; every field has a default except
/// `kind` and `sizes`.
///
/// ```toml
/// kind = "qkp"
/// sizes = [100, 200]
/// instances = 10
/// runs = 10
/// time_limit = 100.0
/// density = 0.5
/// master_seed = 7
/// workers = 4
/// out = "qkp.csv"
///
/// [solver]
/// mode = "both"
/// max_outer_iters = 1000
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// `generic` runs strongly correlated KP instances through the polynomial path.
    pub kind: ProblemKind,
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default = "ten")]
    pub instances: usize,
    #[serde(default = "ten")]
    pub runs: usize,
    /// Seconds per run.
    #[serde(default)]
    pub time_limit: Option<f64>,
    /// Off-diagonal fill for generated QKP instances.
    #[serde(default = "full_density")]
    pub density: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// Parallel runs; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    /// Blank timing columns keep reruns byte-identical.
    #[serde(default = "yes")]
    pub record_timing: bool,
    /// Solve these files instead of generating; `sizes` and `instances` are ignored.
    #[serde(default)]
    pub instance_files: Vec<PathBuf>,
    /// Known optimal objective values for `instance_files`, in the same order.
    #[serde(default)]
    pub known_optima: Vec<f64>,
    /// Aggregate CSV path.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Raw CSV path; defaults to `out` with a `.raw.csv` suffix.
    #[serde(default)]
    pub raw_out: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverOverrides,
}

fn ten() -> usize {
    10
}

fn full_density() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl ExperimentSpec {
    pub fn new(kind: ProblemKind, sizes: Vec<usize>) -> Self {
        Self {
            kind,
            sizes,
            instances: 10,
            runs: 10,
            time_limit: None,
            density: 1.0,
            master_seed: 0,
            workers: 0,
            record_timing: true,
            instance_files: Vec::new(),
            known_optima: Vec::new(),
            out: None,
            raw_out: None,
            solver: SolverOverrides::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                line,
                msg: e.message().to_string(),
            }
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::Validation("runs must be at least 1".into()));
        }
        if self.instance_files.is_empty() {
            if self.sizes.is_empty() || self.sizes.contains(&0) {
                return Err(Error::Validation("sizes must be a nonempty list of positive sizes".into()));
            }
            if self.instances < 1 {
                return Err(Error::Validation("instances must be at least 1".into()));
            }
        } else if !self.known_optima.is_empty() && self.known_optima.len() != self.instance_files.len() {
            return Err(Error::Validation(format!(
                "{} known optima for {} instance files",
                self.known_optima.len(),
                self.instance_files.len()
            )));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Validation("density must lie in (0, 1]".into()));
        }
        self.solve_config(0).validate()
    }

    pub fn solve_config(&self, seed: u64) -> SolveConfig {
        SolveConfig {
            seed,
            time_limit: self.time_limit,
            ..self.solver.apply(SolveConfig::default())
        }
    }

    fn raw_path(&self) -> Option<PathBuf> {
        self.raw_out.clone().or_else(|| {
            self.out.as_ref().map(|p| {
                let stem = p.file_stem().map_or_else(|| "bench".into(), |s| s.to_string_lossy().into_owned());
                p.with_file_name(format!("{stem}.raw.csv"))
            })
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix64(master), |h, &w| splitmix64(h ^ w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub size: usize,
    pub instance: usize,
    pub run: usize,
    pub instance_seed: u64,
    pub run_seed: u64,
    pub objective: f64,
    pub feasible: bool,
    pub optimum: Option<f64>,
    pub ratio: Option<f64>,
    pub outer_iterations: usize,
    pub termination: String,
    pub time_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub size: usize,
    pub method: String,
    pub instances: usize,
    pub runs: usize,
    pub feasible_runs: usize,
    pub mean_ratio: Option<f64>,
    pub std_ratio: Option<f64>,
    /// Mean gain over all runs.
    pub mean_best: f64,
    /// Per instance `100 std / |mean|` of the best gains over its runs, averaged
    /// over instances; blank if any instance has zero mean gain.
    pub rsd_percent: Option<f64>,
    pub mean_time: Option<f64>,
    pub std_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub raw: Vec<RawRow>,
    pub stats: Vec<StatRow>,
}

struct Prepared {
    size: usize,
    index: usize,
    seed: u64,
    solve_target: ProblemInstance,
    optimum: Option<f64>,
}

fn exact_optimum(inst: &ProblemInstance) -> Result<Option<f64>> {
    let r = match inst.kind() {
        ProblemKind::Kp => match kp_dp(inst) {
            Ok(r) => r,
            Err(Error::Refused(_)) if inst.n_vars() <= BRUTE_FORCE_MAX_VARS => brute_force(inst)?,
            Err(Error::Refused(_)) => return Ok(None),
            Err(e) => return Err(e),
        },
        _ if inst.n_vars() <= BRUTE_FORCE_MAX_VARS => brute_force(inst)?,
        _ => return Ok(None),
    };
    Ok(r.optimal_value)
}

fn prepare(spec: &ExperimentSpec) -> Result<Vec<Prepared>> {
    if !spec.instance_files.is_empty() {
        let mut seen: Vec<(usize, usize)> = Vec::new();
        return spec
            .instance_files
            .iter()
            .enumerate()
            .map(|(f, path)| {
                let inst = read_instance(path)?;
                let size = inst.n_vars();
                let index = match seen.iter_mut().find(|(s, _)| *s == size) {
                    Some((_, c)) => {
                        *c += 1;
                        *c - 1
                    }
                    None => {
                        seen.push((size, 1));
                        0
                    }
                };
                let optimum = match spec.known_optima.get(f) {
                    Some(&v) => Some(v),
                    None => exact_optimum(&inst)?,
                };
                let solve_target = if spec.kind == ProblemKind::Generic { inst.to_generic() } else { inst };
                Ok(Prepared {
                    size,
                    index,
                    seed: 0,
                    solve_target,
                    optimum,
                })
            })
            .collect();
    }

    let jobs: Vec<(usize, usize)> = spec
        .sizes
        .iter()
        .flat_map(|&s| (0..spec.instances).map(move |i| (s, i)))
        .collect();
    jobs.into_par_iter()
        .map(|(size, index)| {
            let seed = derive_seed(spec.master_seed, &[1, size as u64, index as u64]);
            let inst = match spec.kind {
                ProblemKind::Qkp => gen_qkp(&QkpGenSpec::new(size, spec.density, seed))?,
                ProblemKind::Kp | ProblemKind::Generic => gen_kp_strong(&KpGenSpec::new(size, seed))?,
            };
            let optimum = exact_optimum(&inst)?;
            let solve_target = if spec.kind == ProblemKind::Generic { inst.to_generic() } else { inst };
            Ok(Prepared {
                size,
                index,
                seed,
                solve_target,
                optimum,
            })
        })
        .collect()
}

fn ratio(objective: f64, feasible: bool, optimum: Option<f64>) -> Option<f64> {
    let opt_gain = -optimum?;
    if !feasible {
        return Some(0.0);
    }
    let gain = -objective;
    Some(if opt_gain > 0.0 { (gain / opt_gain).min(1.0) } else { 1.0 })
}

/// Runs the whole experiment and writes the CSV files named in `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Validation(format!("worker pool: {e}")))?;
    let output = pool.install(|| -> Result<ExperimentOutput> {
        let prepared = prepare(spec)?;
        let jobs: Vec<(&Prepared, usize)> = prepared
            .iter()
            .flat_map(|p| (0..spec.runs).map(move |r| (p, r)))
            .collect();
        let mut raw = jobs
            .into_par_iter()
            .map(|(p, run)| run_one(spec, p, run))
            .collect::<Result<Vec<_>>>()?;
        raw.sort_by_key(|r| (r.size, r.instance, r.run));
        let stats = aggregate(&raw)?;
        Ok(ExperimentOutput { raw, stats })
    })?;

    if let Some(path) = spec.raw_path() {
        write_csv(&path, &output.raw)?;
        let reread = read_raw_csv(&path)?;
        if aggregate(&reread)? != output.stats {
            return Err(Error::Validation(format!(
                "aggregates recomputed from {} disagree with the in-memory ones",
                path.display()
            )));
        }
    }
    if let Some(path) = &spec.out {
        write_csv(path, &output.stats)?;
    }
    Ok(output)
}

fn run_one(spec: &ExperimentSpec, p: &Prepared, run: usize) -> Result<RawRow> {
    let run_seed = derive_seed(spec.master_seed, &[2, p.size as u64, p.index as u64, run as u64]);
    let start = Instant::now();
    let report = solve(&p.solve_target, &spec.solve_config(run_seed))?;
    let elapsed = start.elapsed().as_secs_f64();
    let feasible = p.solve_target.is_feasible(&report.best_x)?;
    if feasible != report.feasible {
        return Err(Error::Validation(format!(
            "size {} instance {} run {run}: solver feasibility flag disagrees with the exact check",
            p.size, p.index
        )));
    }
    Ok(RawRow {
        size: p.size,
        instance: p.index,
        run,
        instance_seed: p.seed,
        run_seed,
        objective: report.best_objective,
        feasible,
        optimum: p.optimum,
        ratio: ratio(report.best_objective, feasible, p.optimum),
        outer_iterations: report.outer_iterations,
        termination: format!("{:?}", report.termination),
        time_secs: spec.record_timing.then_some(elapsed),
    })
}

/// One row per size, computed from raw rows alone.
pub fn aggregate(raw: &[RawRow]) -> Result<Vec<StatRow>> {
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.size).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| {
            let rows: Vec<&RawRow> = raw.iter().filter(|r| r.size == size).collect();
            let mut instances: Vec<usize> = rows.iter().map(|r| r.instance).collect();
            instances.sort_unstable();
            instances.dedup();

            let ratios: Option<Vec<f64>> = rows.iter().map(|r| r.ratio).collect();
            let ratio_stats = ratios.as_deref().map(summarize).transpose()?;
            let gains: Vec<f64> = rows.iter().map(|r| -r.objective).collect();
            let mean_best = summarize(&gains)?.mean;

            let mut rsd_sum = Some(0.0);
            for &i in &instances {
                let g: Vec<f64> = rows.iter().filter(|r| r.instance == i).map(|r| -r.objective).collect();
                let s = summarize(&g)?.rsd_percent;
                rsd_sum = rsd_sum.zip(s).map(|(a, b)| a + b);
            }
            let times: Option<Vec<f64>> = rows.iter().map(|r| r.time_secs).collect();
            let time_stats = times.as_deref().map(summarize).transpose()?;

            Ok(StatRow {
                size,
                method: "mf".into(),
                instances: instances.len(),
                runs: rows.len(),
                feasible_runs: rows.iter().filter(|r| r.feasible).count(),
                mean_ratio: ratio_stats.map(|s| s.mean),
                std_ratio: ratio_stats.map(|s| s.std),
                mean_best,
                rsd_percent: rsd_sum.map(|s| s / instances.len() as f64),
                mean_time: time_stats.map(|s| s.mean),
                std_time: time_stats.map(|s| s.std),
            })
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# {CSV_SCHEMA}; ratio = solver gain / optimal gain, gain = -objective, capped at 1"
    )?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    read_csv(path)
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<StatRow>> {
    read_csv(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_kp() -> ExperimentSpec {
        ExperimentSpec {
            instances: 2,
            runs: 2,
            ..ExperimentSpec::new(ProblemKind::Kp, vec![20])
        }
    }

    #[test]
    fn kp_size_twenty_two_by_two() {
        let out = run_experiment(&small_kp()).unwrap();
        assert_eq!(out.raw.len(), 4);
        assert_eq!(out.stats.len(), 1);
        for r in &out.raw {
            let ratio = r.ratio.unwrap();
            assert!(r.feasible && ratio <= 1.0 && ratio > 0.0);
        }
        assert_eq!(out.stats[0].instances, 2);
        assert_eq!(out.stats[0].runs, 4);
    }

    #[test]
    fn reruns_are_byte_identical_without_timing() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = ExperimentSpec {
            kind: ProblemKind::Qkp,
            sizes: vec![10, 14],
            record_timing: false,
            workers: 2,
            density: 0.5,
            master_seed: 99,
            solver: SolverOverrides {
                max_outer_iters: Some(20),
                ..SolverOverrides::default()
            },
            ..small_kp()
        };
        let mut files = Vec::new();
        for tag in ["a", "b"] {
            spec.out = Some(dir.path().join(format!("{tag}.csv")));
            run_experiment(&spec).unwrap();
            files.push((
                std::fs::read(dir.path().join(format!("{tag}.csv"))).unwrap(),
                std::fs::read(dir.path().join(format!("{tag}.raw.csv"))).unwrap(),
            ));
        }
        assert_eq!(files[0], files[1]);
        let text = String::from_utf8(files[0].1.clone()).unwrap();
        assert!(text.starts_with("# mfopt-bench v1"));
        assert_eq!(text.lines().count(), 2 + 2 * 2 * 2);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut spec = small_kp();
        spec.record_timing = false;
        spec.workers = 1;
        let a = run_experiment(&spec).unwrap();
        spec.workers = 3;
        assert_eq!(a, run_experiment(&spec).unwrap());
    }

    #[test]
    fn aggregates_match_a_hand_computation() {
        let row = |instance, run, objective: f64, ratio: f64| RawRow {
            size: 5,
            instance,
            run,
            instance_seed: 0,
            run_seed: 0,
            objective,
            feasible: true,
            optimum: Some(-10.0),
            ratio: Some(ratio),
            outer_iterations: 1,
            termination: "Converged".into(),
            time_secs: None,
        };
        let raw = vec![row(0, 0, -1.0, 0.1), row(0, 1, -3.0, 0.3), row(1, 0, -5.0, 0.5), row(1, 1, -5.0, 0.5)];
        let s = &aggregate(&raw).unwrap()[0];
        assert_eq!(s.mean_best, 3.5);
        assert!((s.mean_ratio.unwrap() - 0.35).abs() < 1e-15);
        // instance 0: 100 sqrt(2) / 2, instance 1: 0
        assert!((s.rsd_percent.unwrap() - 100.0 * 2f64.sqrt() / 4.0).abs() < 1e-12);
        assert_eq!(s.mean_time, None);
    }

    #[test]
    fn no_oracle_leaves_ratio_blank() {
        let spec = ExperimentSpec {
            kind: ProblemKind::Qkp,
            sizes: vec![30],
            instances: 1,
            runs: 1,
            solver: SolverOverrides {
                max_outer_iters: Some(5),
                ..SolverOverrides::default()
            },
            ..ExperimentSpec::new(ProblemKind::Qkp, vec![])
        };
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.raw[0].ratio, None);
        assert_eq!(out.stats[0].mean_ratio, None);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(7, &[2, 100, 3, 4]);
        assert_eq!(a, derive_seed(7, &[2, 100, 3, 4]));
        assert_ne!(a, derive_seed(7, &[2, 100, 3, 5]));
        assert_ne!(a, derive_seed(8, &[2, 100, 3, 4]));
        assert_ne!(derive_seed(0, &[1, 1, 0]), derive_seed(0, &[2, 1, 0]));
    }

    #[test]
    fn toml_config() {
        let spec = ExperimentSpec::from_toml(
            "kind = \"qkp\"\nsizes = [50]\nruns = 3\ntime_limit = 1.5\n\n[solver]\nmode = \"sample\"\nmax_outer_iters = 10\n",
        )
        .unwrap();
        assert_eq!(spec.kind, ProblemKind::Qkp);
        assert_eq!(spec.instances, 10);
        let cfg = spec.solve_config(4);
        assert_eq!((cfg.seed, cfg.time_limit, cfg.max_outer_iters), (4, Some(1.5), 10));
        assert_eq!(cfg.mode, CandidateMode::Sample);

        match ExperimentSpec::from_toml("kind = \"kp\"\nsizes = [5]\nbogus = 1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExperimentSpec::from_toml("kind = \"kp\"\nsizes = []\n"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn instance_files_with_known_optima() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.txt");
        let kp = ProblemInstance::knapsack(vec![6.0, 10.0], vec![3.0, 6.0], 6.0).unwrap();
        crate::io::write_instance(&kp, &path).unwrap();
        let spec = ExperimentSpec {
            instance_files: vec![path],
            known_optima: vec![-10.0],
            runs: 2,
            ..ExperimentSpec::new(ProblemKind::Kp, vec![])
        };
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.raw.len(), 2);
        assert_eq!(out.raw[0].optimum, Some(-10.0));
        assert_eq!(out.stats[0].size, 2);
    }
}
