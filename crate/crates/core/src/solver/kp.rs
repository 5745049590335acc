use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{Knapsack, ProblemInstance};
use crate::meanfield::{self, logistic_response, MeanFieldState, MultiplierSet};

use super::{
    init_mu_kp, offer_samples, restart_mu, tune_multiplier, BestTracker, MuRecord, RunLog,
    SolveConfig, SolveReport, Termination,
};

/// Closed-form KP marginals `m_i = 1 / (1 + exp(-q_i + mu w_i))`, clamped.
pub fn kp_marginals(k: &Knapsack, mu: f64) -> Vec<f64> {
    k.gains
        .iter()
        .zip(&k.weights)
        .map(|(q, w)| logistic_response(-q + mu * w))
        .collect()
}

/// Linear knapsack.
///
/// Starts from `mean(q) / mean(w)`, tunes `mu` on the closed-form marginals
/// until `|w.m - d| <= tol`, rounding the marginals at every evaluated `mu` and
/// sampling at the tuned one. If the tolerance is missed, the next search
/// starts from a uniform draw within `restart_neighborhood` of the multiplier
/// that produced the incumbent.
pub fn solve_kp(instance: &ProblemInstance, config: &SolveConfig) -> Result<SolveReport> {
    config.validate()?;
    let k = instance
        .as_knapsack()
        .ok_or_else(|| Error::Validation("solve_kp needs a KP instance".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tracker = BestTracker::new(instance);
    let mut log = RunLog::new();

    let mu0 = init_mu_kp(instance, config.alpha)?;
    let mut mu_start = mu0;
    let mut last_mu = mu0;
    let mut termination = Termination::IterationBudget;

    for iteration in 0..config.max_outer_iters {
        if log.out_of_time(config) {
            termination = Termination::TimeLimit;
            break;
        }
        let tuned = tune_multiplier(
            |mu| {
                let m = kp_marginals(k, mu);
                if config.mode.rounds() {
                    tracker.offer(m.iter().map(|&v| v > 0.5).collect(), mu)?;
                }
                Ok(meanfield::dot(&k.weights, &m) - k.capacity)
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
        let state = MeanFieldState::new(kp_marginals(k, tuned.mu))?;
        offer_samples(&mut tracker, &state, tuned.mu, config, &mut rng)?;

        last_mu = tuned.mu;
        log.trajectory.push(MuRecord {
            iteration,
            mu: tuned.mu,
            slack: tuned.slack,
        });
        log.curve.push(tracker.best_value());
        if tuned.slack.abs() <= config.tol {
            termination = Termination::Converged;
            break;
        }
        let center = tracker.best_mu().unwrap_or(tuned.mu);
        mu_start = restart_mu(center, config.restart_neighborhood, &mut rng);
    }

    // Closed form: every stationary point is exact.
    log.finish(tracker, MultiplierSet::single(last_mu)?, 0.0, termination)
}
