//! Exact reference solvers for desk-scale validation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, Structure};

/// Largest instance [`brute_force`] will enumerate.
pub const BRUTE_FORCE_MAX_VARS: usize = 24;

/// Upper bound on `(n + 1) * (d + 1)` cells for [`kp_dp`].
pub const DP_MAX_CELLS: u64 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMethod {
    Brute,
    Dp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// `None` when no feasible point exists.
    pub optimal_x: Option<Vec<bool>>,
    pub optimal_value: Option<f64>,
    pub method: OracleMethod,
    pub elapsed_secs: f64,
}

impl OracleResult {
    pub fn is_feasible(&self) -> bool {
        self.optimal_x.is_some()
    }
}

/// Enumerates all `2^n` points. Points are visited in lexicographic order of
/// `(x_0, x_1, ...)` and only strict improvements replace the incumbent, so
/// ties resolve to the lexicographically smallest vector. The space is split
/// into chunks solved in parallel; merging by `(value, index)` gives the same
/// answer as a sequential scan.
pub fn brute_force(instance: &ProblemInstance) -> Result<OracleResult> {
    let n = instance.n_vars();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(Error::Refused(format!(
            "brute force limited to {BRUTE_FORCE_MAX_VARS} variables, got {n}"
        )));
    }
    let start = Instant::now();
    let total: u64 = 1 << n;
    let chunk_bits = n.min(8);
    let chunks: u64 = 1 << chunk_bits;
    let per_chunk = total / chunks;

    let best = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Option<(f64, u64)>> {
            let mut x = vec![false; n];
            let mut best: Option<(f64, u64)> = None;
            for v in c * per_chunk..(c + 1) * per_chunk {
                decode(v, &mut x);
                if !instance.is_feasible(&x)? {
                    continue;
                }
                let value = instance.objective_value(&x)?;
                if best.is_none_or(|(b, _)| value < b) {
                    best = Some((value, v));
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let (optimal_x, optimal_value) = match best {
        Some((value, v)) => {
            let mut x = vec![false; n];
            decode(v, &mut x);
            (Some(x), Some(value))
        }
        None => (None, None),
    };
    Ok(OracleResult {
        optimal_x,
        optimal_value,
        method: OracleMethod::Brute,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// `x_0` is the most significant bit, so increasing `v` is lexicographic order.
fn decode(v: u64, x: &mut [bool]) {
    let n = x.len();
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = (v >> (n - 1 - i)) & 1 == 1;
    }
}

/// Capacity-indexed dynamic program for KP with integer weights and capacity.
pub fn kp_dp(instance: &ProblemInstance) -> Result<OracleResult> {
    let Structure::Knapsack(k) = instance.structure() else {
        return Err(Error::Refused("dynamic program needs a KP instance".into()));
    };
    if k.weights.iter().any(|w| w.fract() != 0.0) || k.capacity.fract() != 0.0 {
        return Err(Error::Refused("dynamic program needs integer weights and capacity".into()));
    }
    let start = Instant::now();
    let n = k.gains.len();
    if k.capacity < 0.0 {
        return Ok(OracleResult {
            optimal_x: None,
            optimal_value: None,
            method: OracleMethod::Dp,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
    }
    let cap = k.capacity as usize;
    let cells = (n as u64 + 1) * (cap as u64 + 1);
    if cells > DP_MAX_CELLS {
        return Err(Error::Refused(format!("dynamic program table too large ({cells} cells)")));
    }

    // best[c] = max gain with total weight <= c; take[i][c] marks item i used.
    let mut best = vec![0.0f64; cap + 1];
    let mut take = vec![false; n * (cap + 1)];
    for i in 0..n {
        let w = k.weights[i] as usize;
        let q = k.gains[i];
        if w > cap {
            continue;
        }
        let row = &mut take[i * (cap + 1)..(i + 1) * (cap + 1)];
        for c in (w..=cap).rev() {
            let with = best[c - w] + q;
            if with > best[c] {
                best[c] = with;
                row[c] = true;
            }
        }
    }

    let mut x = vec![false; n];
    let mut c = cap;
    for i in (0..n).rev() {
        if take[i * (cap + 1) + c] {
            x[i] = true;
            c -= k.weights[i] as usize;
        }
    }
    let value = instance.objective_value(&x)?;
    Ok(OracleResult {
        optimal_x: Some(x),
        optimal_value: Some(value),
        method: OracleMethod::Dp,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
