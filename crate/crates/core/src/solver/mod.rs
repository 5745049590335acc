//! Outer loops around the mean-field fixed point: multiplier initialization,
//! slack-driven multiplier search, restarts, candidate extraction and
//! best-feasible tracking.

mod generic;
mod kp;
mod multiplier;
mod qkp;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, ProblemKind};
use crate::meanfield::{self, MeanFieldState, MultiplierSet};

pub use generic::{initial_multipliers, solve_generic};
pub use kp::{kp_marginals, solve_kp};
pub use multiplier::{init_mu_kp, init_mu_qkp, tune_mu_slack, tune_multiplier, SlackTuning, MAX_BISECTIONS, MAX_DOUBLINGS};
pub use qkp::solve_qkp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    Round,
    Sample,
    Both,
}

impl std::str::FromStr for CandidateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "round" => Ok(CandidateMode::Round),
            "sample" => Ok(CandidateMode::Sample),
            "both" => Ok(CandidateMode::Both),
            other => Err(Error::Validation(format!("unknown candidate mode `{other}`"))),
        }
    }
}

impl CandidateMode {
    fn rounds(self) -> bool {
        matches!(self, CandidateMode::Round | CandidateMode::Both)
    }

    fn samples(self) -> bool {
        matches!(self, CandidateMode::Sample | CandidateMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Target `|w.m - d|` (KP/QKP) or KKT residual (generic).
    pub tol: f64,
    pub max_outer_iters: usize,
    /// Relative half-width of the restart interval around the incumbent's multiplier.
    pub restart_neighborhood: f64,
    /// Mean-field sweeps per outer iteration for QKP.
    pub inner_sweeps: usize,
    /// Wall-clock budget in seconds.
    pub time_limit: Option<f64>,
    pub mode: CandidateMode,
    pub samples_per_iter: usize,
    pub seed: u64,
    /// Finite-size correction for the KP starting multiplier; `None` disables it.
    pub alpha: Option<f64>,
    /// Fixed subgradient step for the generic path; `None` picks one per constraint.
    pub step_size: Option<f64>,
    /// Damping for mean-field sweeps; `None` means 0 for the QKP inner step and
    /// [`meanfield::MfConfig::for_instance`] on the generic path.
    pub damping: Option<f64>,
    /// Sweep budget and residual tolerance for the generic path's fixed point.
    pub fixed_point_sweeps: usize,
    pub fixed_point_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_outer_iters: 1000,
            restart_neighborhood: 0.10,
            inner_sweeps: 1,
            time_limit: None,
            mode: CandidateMode::Both,
            samples_per_iter: 8,
            seed: 0,
            alpha: None,
            step_size: None,
            damping: None,
            fixed_point_sweeps: 1000,
            fixed_point_tol: 1e-10,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Validation("tol must be positive".into()));
        }
        if self.max_outer_iters < 1 || self.inner_sweeps < 1 || self.fixed_point_sweeps < 1 {
            return Err(Error::Validation("iteration budgets must be at least 1".into()));
        }
        if !(self.restart_neighborhood > 0.0 && self.restart_neighborhood < 1.0) {
            return Err(Error::Validation("restart neighborhood must lie in (0, 1)".into()));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(Error::Validation("alpha must be positive".into()));
            }
        }
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(Error::Validation("time limit must be positive".into()));
            }
        }
        if let Some(d) = self.damping {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::Validation("damping must lie in [0, 1)".into()));
            }
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0) {
                return Err(Error::Validation("step size must be positive".into()));
            }
        }
        if !(self.fixed_point_tol > 0.0) {
            return Err(Error::Validation("fixed-point tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Slack (or KKT residual) within `tol`.
    Converged,
    IterationBudget,
    TimeLimit,
    /// Multipliers grew beyond the divergence threshold.
    Diverged,
    /// No multiplier drives the slack down to `tol`.
    Unsatisfiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuRecord {
    pub iteration: usize,
    pub mu: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub kind: ProblemKind,
    pub best_x: Vec<bool>,
    pub best_objective: f64,
    pub feasible: bool,
    /// Set when no candidate was feasible and the all-zero point was reported instead.
    pub from_baseline: bool,
    /// Multiplier at which the incumbent was extracted.
    pub best_mu: Option<f64>,
    pub final_multipliers: MultiplierSet,
    pub mu_trajectory: Vec<MuRecord>,
    pub outer_iterations: usize,
    pub wall_time_secs: f64,
    /// Best feasible objective after each outer iteration.
    pub best_curve: Vec<Option<f64>>,
    pub final_residual: f64,
    pub termination: Termination,
    pub candidates_evaluated: usize,
    pub diagnostics: Vec<String>,
}

/// Dispatches on the instance kind.
pub fn solve(instance: &ProblemInstance, config: &SolveConfig) -> Result<SolveReport> {
    match instance.kind() {
        ProblemKind::Kp => solve_kp(instance, config),
        ProblemKind::Qkp => solve_qkp(instance, config),
        ProblemKind::Generic => solve_generic(instance, config),
    }
}

/// Keeps the best feasible candidate seen so far.
pub(crate) struct BestTracker<'a> {
    instance: &'a ProblemInstance,
    best: Option<(Vec<bool>, f64, f64)>,
    last: Option<Vec<bool>>,
    evaluated: usize,
}

impl<'a> BestTracker<'a> {
    pub fn new(instance: &'a ProblemInstance) -> Self {
        Self {
            instance,
            best: None,
            last: None,
            evaluated: 0,
        }
    }

    /// Returns true when `x` became the new incumbent. Repeats of the previous
    /// candidate are skipped.
    pub fn offer(&mut self, x: Vec<bool>, mu: f64) -> Result<bool> {
        if self.last.as_ref() == Some(&x) {
            return Ok(false);
        }
        self.evaluated += 1;
        let improved = if self.instance.is_feasible(&x)? {
            let value = self.instance.objective_value(&x)?;
            if self.best.as_ref().is_none_or(|(_, b, _)| value < *b) {
                self.best = Some((x.clone(), value, mu));
                true
            } else {
                false
            }
        } else {
            false
        };
        self.last = Some(x);
        Ok(improved)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.as_ref().map(|(_, v, _)| *v)
    }

    pub fn best_mu(&self) -> Option<f64> {
        self.best.as_ref().map(|(_, _, mu)| *mu)
    }
}

/// Everything a solve loop accumulates besides the tracker.
pub(crate) struct RunLog {
    pub start: Instant,
    pub trajectory: Vec<MuRecord>,
    pub curve: Vec<Option<f64>>,
    pub diagnostics: Vec<String>,
}

impl RunLog {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            trajectory: Vec::new(),
            curve: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn out_of_time(&self, config: &SolveConfig) -> bool {
        config
            .time_limit
            .is_some_and(|t| self.start.elapsed().as_secs_f64() >= t)
    }

    pub fn finish(
        self,
        tracker: BestTracker<'_>,
        final_multipliers: MultiplierSet,
        final_residual: f64,
        termination: Termination,
    ) -> Result<SolveReport> {
        let instance = tracker.instance;
        let n = instance.n_vars();
        let candidates_evaluated = tracker.evaluated;
        let (best_x, best_objective, feasible, from_baseline, best_mu) = match tracker.best {
            Some((x, v, mu)) => (x, v, true, false, Some(mu)),
            None => {
                let zero = vec![false; n];
                let ok = instance.is_feasible(&zero)?;
                let v = instance.objective_value(&zero)?;
                (zero, v, ok, ok, None)
            }
        };
        Ok(SolveReport {
            kind: instance.kind(),
            best_x,
            best_objective,
            feasible,
            from_baseline,
            best_mu,
            final_multipliers,
            outer_iterations: self.curve.len(),
            mu_trajectory: self.trajectory,
            wall_time_secs: self.start.elapsed().as_secs_f64(),
            best_curve: self.curve,
            final_residual,
            termination,
            candidates_evaluated,
            diagnostics: self.diagnostics,
        })
    }
}

/// Offers `samples_per_iter` draws from `state` when sampling is enabled.
pub(crate) fn offer_samples<R: Rng>(
    tracker: &mut BestTracker<'_>,
    state: &MeanFieldState,
    mu: f64,
    config: &SolveConfig,
    rng: &mut R,
) -> Result<()> {
    if config.mode.samples() {
        for _ in 0..config.samples_per_iter {
            tracker.offer(meanfield::sample(state, rng), mu)?;
        }
    }
    Ok(())
}

/// Uniform draw on `[mu (1 - r), mu (1 + r)]`.
pub(crate) fn restart_mu<R: Rng>(center: f64, radius: f64, rng: &mut R) -> f64 {
    if center > 0.0 {
        rng.gen_range(center * (1.0 - radius)..=center * (1.0 + radius))
    } else {
        0.0
    }
}
