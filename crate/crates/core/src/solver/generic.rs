use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::instance::ProblemInstance;
use crate::meanfield::{self, MeanFieldState, MfConfig, MultiplierSet};
use crate::poly::MultilinearPolynomial;

use super::{offer_samples, BestTracker, MuRecord, RunLog, SolveConfig, SolveReport, Termination};

/// Growth of the multiplier norm (relative to the start) treated as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn grad_at_half(p: &MultilinearPolynomial) -> Vec<f64> {
    let mut g = vec![0.0; p.n_vars()];
    p.add_grad_unchecked(&vec![0.5; p.n_vars()], 1.0, &mut g);
    g
}

/// Per constraint: `mean |df/dm_i| / mean |dc/dm_i|` at `m = 1/2`, or 0 for a
/// constraint whose gradient vanishes there.
pub fn initial_multipliers(instance: &ProblemInstance) -> Result<MultiplierSet> {
    let f_scale = mean_abs(&grad_at_half(&instance.mean_field_objective()));
    let ratio = |c: &MultilinearPolynomial| {
        let c_scale = mean_abs(&grad_at_half(c));
        if c_scale > 0.0 {
            f_scale / c_scale
        } else {
            0.0
        }
    };
    MultiplierSet::new(
        instance.equalities().iter().map(ratio).collect(),
        instance.inequalities().iter().map(ratio).collect(),
    )
}

/// Step for one constraint: `max(mult0, 1) / (N |grad c(1/2)|)`.
fn default_step(c: &MultilinearPolynomial, start: f64, n: usize) -> f64 {
    let g = norm2(&grad_at_half(c));
    if g > 0.0 {
        start.abs().max(1.0) / (n as f64 * g)
    } else {
        0.0
    }
}

/// Any polynomial instance.
///
/// Each outer iteration solves the fixed point from a fresh random state at the
/// current multipliers, offers the rounded state and samples, then moves the
/// multipliers along the constraint values at the mean field:
/// `mu_k <- max(0, mu_k + eta_k g_k(m))`, `lambda_l <- lambda_l + eta_l h_l(m)`.
///
/// Stops when the KKT residual is within `tol`: equality values, positive
/// inequality violations, and `|g_k(m)|` for every active `mu_k > 0`.
pub fn solve_generic(instance: &ProblemInstance, config: &SolveConfig) -> Result<SolveReport> {
    config.validate()?;
    let n = instance.n_vars();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tracker = BestTracker::new(instance);
    let mut log = RunLog::new();

    let mf = MfConfig {
        damping: config.damping.unwrap_or_else(|| MfConfig::for_instance(instance).damping),
        max_sweeps: config.fixed_point_sweeps,
        tolerance: config.fixed_point_tol,
    };
    let mut mult = initial_multipliers(instance)?;
    let start_norm = mult.norm().max(1.0);
    let step = |c: &MultilinearPolynomial, start: f64| config.step_size.unwrap_or_else(|| default_step(c, start, n));
    let eta_eq: Vec<f64> = instance
        .equalities()
        .iter()
        .zip(mult.lambda())
        .map(|(h, &l)| step(h, l))
        .collect();
    let eta_ineq: Vec<f64> = instance
        .inequalities()
        .iter()
        .zip(mult.mu())
        .map(|(g, &m)| step(g, m))
        .collect();

    let mut termination = Termination::IterationBudget;
    let mut final_residual = f64::NAN;

    for iteration in 0..config.max_outer_iters {
        if log.out_of_time(config) {
            termination = Termination::TimeLimit;
            break;
        }
        let m0 = MeanFieldState::random(n, &mut rng);
        let fp = meanfield::solve_fixed_point(instance, &mult, &m0, &mf)?;
        final_residual = fp.residual;
        let mu_now = mult.mu().first().copied().unwrap_or(0.0);
        if config.mode.rounds() {
            tracker.offer(meanfield::round(&fp.state), mu_now)?;
        }
        offer_samples(&mut tracker, &fp.state, mu_now, config, &mut rng)?;

        let m = fp.state.as_slice();
        let h: Vec<f64> = instance.equalities().iter().map(|p| p.eval_unchecked(m)).collect();
        let g: Vec<f64> = instance.inequalities().iter().map(|p| p.eval_unchecked(m)).collect();
        let kkt = h
            .iter()
            .map(|v| v.abs())
            .chain(g.iter().zip(mult.mu()).map(|(&gk, &mk)| if mk > 0.0 { gk.abs() } else { gk.max(0.0) }))
            .fold(0.0, f64::max);

        log.trajectory.push(MuRecord {
            iteration,
            mu: mu_now,
            slack: g.first().copied().unwrap_or(0.0),
        });
        log.curve.push(tracker.best_value());
        if kkt <= config.tol {
            termination = Termination::Converged;
            break;
        }

        for (l, (hl, eta)) in h.iter().zip(&eta_eq).enumerate() {
            let v = mult.lambda()[l] + eta * hl;
            mult.set_lambda(l, v);
        }
        for (k, (gk, eta)) in g.iter().zip(&eta_ineq).enumerate() {
            let v = mult.mu()[k] + eta * gk;
            mult.set_mu(k, v);
        }
        if mult.norm() > DIVERGENCE_FACTOR * start_norm {
            log.diagnostics.push(format!(
                "multiplier norm {} exceeded {DIVERGENCE_FACTOR} times its start",
                mult.norm()
            ));
            termination = Termination::Diverged;
            break;
        }
    }

    log.finish(tracker, mult, final_residual, termination)
}
