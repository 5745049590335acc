//! Starting multipliers and the scalar slack search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;

use super::kp::kp_marginals;

pub const MAX_DOUBLINGS: usize = 60;
pub const MAX_BISECTIONS: usize = 200;

/// `mu0 = mean(q) / mean(w)`, optionally corrected by
/// `-(1 / (alpha N)) ln(d / (N mean(w) - d))`, clamped at zero. The correction
/// is skipped when `d >= N mean(w)` or `d <= 0`.
pub fn init_mu_kp(instance: &ProblemInstance, alpha: Option<f64>) -> Result<f64> {
    let k = instance
        .as_knapsack()
        .ok_or_else(|| Error::Validation("KP multiplier rule needs a KP instance".into()))?;
    let n = k.gains.len() as f64;
    let w_bar = k.weights.iter().sum::<f64>() / n;
    if !(w_bar > 0.0) {
        return Err(Error::Validation("mean weight must be positive".into()));
    }
    let q_bar = k.gains.iter().sum::<f64>() / n;
    let mut mu = q_bar / w_bar;
    if let Some(alpha) = alpha {
        let total = n * w_bar;
        let d = k.capacity;
        if d > 0.0 && total > d {
            mu -= (d / (total - d)).ln() / (alpha * n);
        }
    }
    Ok(mu.max(0.0))
}

/// `mu0 = (2 sum_i q_ii + sum_i sum_{j != i} q_ij) / (N mean(w))`.
pub fn init_mu_qkp(instance: &ProblemInstance) -> Result<f64> {
    let q = instance
        .as_quadratic()
        .ok_or_else(|| Error::Validation("QKP multiplier rule needs a QKP instance".into()))?;
    let n = q.weights.len();
    let total_w: f64 = q.weights.iter().sum();
    if !(total_w > 0.0) {
        return Err(Error::Validation("mean weight must be positive".into()));
    }
    let mut acc = 0.0;
    for i in 0..n {
        let row = q.matrix.row(i);
        acc += row.iter().sum::<f64>() + row[i];
    }
    // N * mean(w) is the total weight.
    Ok(acc / total_w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackTuning {
    pub mu: f64,
    pub slack: f64,
    pub evaluations: usize,
}

/// Minimizes `slack(mu)^2` over `mu >= 0` for a nonincreasing slack map.
///
/// Returns `mu = 0` when the constraint is inactive there. Otherwise brackets
/// a point with `slack <= tol` by doubling from `mu_start`, then bisects until
/// `|slack| <= tol` or [`MAX_BISECTIONS`] steps, returning the evaluated point
/// with the smallest `|slack|`.
pub fn tune_multiplier<F>(mut slack: F, mu_start: f64, tol: f64) -> Result<SlackTuning>
where
    F: FnMut(f64) -> Result<f64>,
{
    let s0 = slack(0.0)?;
    let mut evaluations = 1;
    if s0 <= tol {
        return Ok(SlackTuning {
            mu: 0.0,
            slack: s0,
            evaluations,
        });
    }

    let (mut lo, mut s_lo) = (0.0, s0);
    let mut hi = if mu_start > 0.0 && mu_start.is_finite() {
        mu_start
    } else {
        1.0
    };
    let mut s_hi = slack(hi)?;
    evaluations += 1;
    let mut doublings = 0;
    while s_hi > tol {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::Unsatisfiable(format!(
                "slack still {s_hi} at mu = {hi} after {MAX_DOUBLINGS} doublings"
            )));
        }
        lo = hi;
        s_lo = s_hi;
        hi *= 2.0;
        s_hi = slack(hi)?;
        evaluations += 1;
        doublings += 1;
    }

    let mut best = if s_lo.abs() < s_hi.abs() {
        (lo, s_lo)
    } else {
        (hi, s_hi)
    };
    let mut steps = 0;
    while best.1.abs() > tol && steps < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = slack(mid)?;
        evaluations += 1;
        steps += 1;
        if s.abs() < best.1.abs() {
            best = (mid, s);
        }
        if s > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SlackTuning {
        mu: best.0,
        slack: best.1,
        evaluations,
    })
}

/// Slack search on the KP closed form `m_i = 1 / (1 + exp(-q_i + mu w_i))`.
pub fn tune_mu_slack(instance: &ProblemInstance, mu_start: f64, tol: f64) -> Result<SlackTuning> {
    let k = instance
        .as_knapsack()
        .ok_or_else(|| Error::Validation("closed-form slack search needs a KP instance".into()))?;
    tune_multiplier(
        |mu| {
            let m = kp_marginals(k, mu);
            Ok(crate::meanfield::dot(&k.weights, &m) - k.capacity)
        },
        mu_start,
        tol,
    )
}
