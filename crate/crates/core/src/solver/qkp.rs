use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::meanfield::{self, logistic_response, quadratic_objective_grad, MeanFieldState, MultiplierSet};

use super::{
    init_mu_qkp, offer_samples, restart_mu, tune_multiplier, BestTracker, MuRecord, RunLog,
    SolveConfig, SolveReport, Termination,
};

/// Quadratic knapsack.
///
/// Each outer iteration draws a fresh random state, applies
/// `inner_sweeps - 1` sweeps at the current starting multiplier, and treats
/// the last sweep as a function of `mu`: the slack `w.m(mu) - d` of that sweep
/// is monotone in `mu`, so the same bisection as KP applies. Rounded
/// candidates are taken at every evaluated `mu`, samples at the tuned one.
///
/// The loop runs until `max_outer_iters` or `time_limit`; later iterations only
/// add candidates, so more budget never worsens the incumbent.
pub fn solve_qkp(instance: &ProblemInstance, config: &SolveConfig) -> Result<SolveReport> {
    config.validate()?;
    let q = instance
        .as_quadratic()
        .ok_or_else(|| Error::Validation("solve_qkp needs a QKP instance".into()))?;
    let n = instance.n_vars();
    let damping = config.damping.unwrap_or(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tracker = BestTracker::new(instance);
    let mut log = RunLog::new();

    let mu0 = init_mu_qkp(instance)?;
    let mut mu_start = mu0;
    let mut last = (mu0, MeanFieldState::uniform(n, 0.5)?);
    let mut termination = Termination::IterationBudget;

    for iteration in 0..config.max_outer_iters {
        if log.out_of_time(config) {
            termination = Termination::TimeLimit;
            break;
        }
        let mut prev = MeanFieldState::random(n, &mut rng);
        if config.inner_sweeps > 1 {
            let fixed = MultiplierSet::single(mu_start)?;
            for _ in 1..config.inner_sweeps {
                prev = meanfield::mf_sweep(instance, &fixed, &prev, damping)?;
            }
        }
        let base = quadratic_objective_grad(&q.matrix, prev.as_slice());
        let sweep_at = |mu: f64| -> Vec<f64> {
            base.iter()
                .zip(&q.weights)
                .zip(prev.as_slice())
                .map(|((g, w), old)| {
                    let s = logistic_response(g + mu * w);
                    ((1.0 - damping) * s + damping * old).clamp(meanfield::EPS_CLAMP, 1.0 - meanfield::EPS_CLAMP)
                })
                .collect()
        };

        let tuned = tune_multiplier(
            |mu| {
                let m = sweep_at(mu);
                if config.mode.rounds() {
                    tracker.offer(m.iter().map(|&v| v > 0.5).collect(), mu)?;
                }
                Ok(meanfield::dot(&q.weights, &m) - q.capacity)
            },
            mu_start,
            config.tol,
        );
        let tuned = match tuned {
            Ok(t) => t,
            Err(Error::Unsatisfiable(msg)) => {
                log.diagnostics.push(msg);
                log.curve.push(tracker.best_value());
                termination = Termination::Unsatisfiable;
                break;
            }
            Err(e) => return Err(e),
        };
        let state = MeanFieldState::new(sweep_at(tuned.mu))?;
        offer_samples(&mut tracker, &state, tuned.mu, config, &mut rng)?;

        log.trajectory.push(MuRecord {
            iteration,
            mu: tuned.mu,
            slack: tuned.slack,
        });
        log.curve.push(tracker.best_value());
        last = (tuned.mu, state);
        let center = tracker.best_mu().unwrap_or(tuned.mu);
        mu_start = restart_mu(center, config.restart_neighborhood, &mut rng);
        if mu_start == 0.0 {
            mu_start = mu0;
        }
    }

    let final_mult = MultiplierSet::single(last.0)?;
    let final_residual = meanfield::residual(instance, &final_mult, &last.1)?;
    log.finish(tracker, final_mult, final_residual, termination)
}
