//! Factorized (mean-field) model over binary variables: marginals, entropy,
//! Lagrangian, free energy and the self-consistency iteration
//! `m_i = 1 / (1 + exp(dL/dm_i))`, with `kT = 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::instance::{ProblemInstance, Structure};

/// Lower/upper clamp for marginals; keeps entropy finite.
pub const EPS_CLAMP: f64 = 1e-9;

/// Exponents are saturated to this magnitude before `exp`.
pub const EXPONENT_LIMIT: f64 = 500.0;

/// Marginal probabilities `m_i = P(x_i = 1)`, each in `[EPS_CLAMP, 1 - EPS_CLAMP]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState(Vec<f64>);

impl MeanFieldState {
    /// Accepts values in `[0, 1]` and clamps them into the open interval.
    pub fn new(m: Vec<f64>) -> Result<Self> {
        if let Some(bad) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("marginal {bad} outside [0, 1]")));
        }
        Ok(Self(m.into_iter().map(clamp).collect()))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// Random start with each component uniform on `[0.4, 0.6]`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| rng.gen_range(0.4..=0.6)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn clamp(v: f64) -> f64 {
    v.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP)
}

/// KKT multipliers: `lambda` for equalities (free sign), `mu` for inequalities (`>= 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSet {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl MultiplierSet {
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if let Some(bad) = mu.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Domain(format!("inequality multiplier {bad} is negative")));
        }
        if lambda.iter().any(|v| !v.is_finite()) || mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("multipliers must be finite".into()));
        }
        Ok(Self { lambda, mu })
    }

    pub fn zeros(instance: &ProblemInstance) -> Self {
        Self {
            lambda: vec![0.0; instance.equalities().len()],
            mu: vec![0.0; instance.inequalities().len()],
        }
    }

    /// Single inequality multiplier, the KP/QKP case.
    pub fn single(mu: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![mu])
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn set_lambda(&mut self, l: usize, v: f64) {
        self.lambda[l] = v;
    }

    /// Projects onto `mu >= 0`.
    pub fn set_mu(&mut self, k: usize, v: f64) {
        self.mu[k] = v.max(0.0);
    }

    pub fn norm(&self) -> f64 {
        self.lambda
            .iter()
            .chain(&self.mu)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn check(&self, instance: &ProblemInstance) -> Result<()> {
        check_len(instance.equalities().len(), self.lambda.len())?;
        check_len(instance.inequalities().len(), self.mu.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfConfig {
    /// Weight of the previous iterate in the damped update, in `[0, 1)`.
    pub damping: f64,
    pub max_sweeps: usize,
    /// Stop when `max_i |m_i - sigma_i(m)|` falls below this.
    pub tolerance: f64,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_sweeps: 1000,
            tolerance: 1e-10,
        }
    }
}

impl MfConfig {
    /// Undamped for linear problems (one sweep is exact), `0.5` otherwise.
    pub fn for_instance(instance: &ProblemInstance) -> Self {
        Self {
            damping: if instance.is_linear() { 0.0 } else { 0.5 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Domain(format!("damping {} not in [0, 1)", self.damping)));
        }
        if !(self.tolerance > 0.0) || self.max_sweeps == 0 {
            return Err(Error::Domain("tolerance and sweep budget must be positive".into()));
        }
        Ok(())
    }
}

/// `p(x_i) = 1 + (2 m_i - 1) x_i - m_i`.
pub fn marginal(m_i: f64, x_i: bool) -> Result<f64> {
    if !(0.0..=1.0).contains(&m_i) {
        return Err(Error::Domain(format!("marginal {m_i} outside [0, 1]")));
    }
    let x = if x_i { 1.0 } else { 0.0 };
    Ok(1.0 + (2.0 * m_i - 1.0) * x - m_i)
}

/// `-sum_i [(1 - m_i) ln(1 - m_i) + m_i ln m_i]`.
pub fn entropy(state: &MeanFieldState) -> f64 {
    -state
        .0
        .iter()
        .map(|&m| (1.0 - m) * (1.0 - m).ln() + m * m.ln())
        .sum::<f64>()
}

/// `f(m) + sum_l lambda_l h_l(m) + sum_k mu_k g_k(m)` with the objective term
/// taken from [`ProblemInstance::mean_field_objective`].
pub fn lagrangian(instance: &ProblemInstance, mult: &MultiplierSet, state: &MeanFieldState) -> Result<f64> {
    mult.check(instance)?;
    check_len(instance.n_vars(), state.len())?;
    let m = state.as_slice();
    let objective = match instance.structure() {
        Structure::Knapsack(k) => -dot(&k.gains, m),
        Structure::Quadratic(q) => {
            let mut acc = 0.0;
            for i in 0..q.matrix.n() {
                let row = q.matrix.row(i);
                let upper: f64 = row[i + 1..]
                    .iter()
                    .zip(&m[i + 1..])
                    .map(|(a, b)| a * b)
                    .sum();
                acc += m[i] * (row[i] * m[i] + upper);
            }
            -acc
        }
        Structure::Generic => instance.objective().eval_unchecked(m),
    };
    Ok(objective + constraint_terms(instance, mult, m))
}

fn constraint_terms(instance: &ProblemInstance, mult: &MultiplierSet, m: &[f64]) -> f64 {
    let eq: f64 = instance
        .equalities()
        .iter()
        .zip(&mult.lambda)
        .map(|(h, l)| l * h.eval_unchecked(m))
        .sum();
    let ineq: f64 = instance
        .inequalities()
        .iter()
        .zip(&mult.mu)
        .map(|(g, u)| u * g.eval_unchecked(m))
        .sum();
    eq + ineq
}

/// Gradient of [`lagrangian`] with respect to `m`.
///
/// KP uses `-q_i + mu w_i`; QKP uses `-2 q_ii m_i - sum_{j != i} q_ij m_j + mu w_i`;
/// generic instances go through [`lagrangian_grad_polynomial`].
pub fn lagrangian_grad(
    instance: &ProblemInstance,
    mult: &MultiplierSet,
    state: &MeanFieldState,
) -> Result<Vec<f64>> {
    mult.check(instance)?;
    check_len(instance.n_vars(), state.len())?;
    let m = state.as_slice();
    Ok(match instance.structure() {
        Structure::Knapsack(k) => {
            let mu = mult.mu[0];
            k.gains
                .iter()
                .zip(&k.weights)
                .map(|(q, w)| -q + mu * w)
                .collect()
        }
        Structure::Quadratic(q) => {
            let mu = mult.mu[0];
            let mut g = quadratic_objective_grad(&q.matrix, m);
            for (gi, w) in g.iter_mut().zip(&q.weights) {
                *gi += mu * w;
            }
            g
        }
        Structure::Generic => polynomial_grad(instance, mult, m),
    })
}

/// Objective part of the QKP gradient: `-2 q_ii m_i - sum_{j != i} q_ij m_j`.
pub(crate) fn quadratic_objective_grad(q: &crate::instance::SymMatrix, m: &[f64]) -> Vec<f64> {
    (0..q.n())
        .map(|i| {
            let row = q.row(i);
            let full: f64 = row.iter().zip(m).map(|(a, b)| a * b).sum();
            -(full + row[i] * m[i])
        })
        .collect()
}

/// Gradient through the polynomial representation only, for any instance kind.
pub fn lagrangian_grad_polynomial(
    instance: &ProblemInstance,
    mult: &MultiplierSet,
    state: &MeanFieldState,
) -> Result<Vec<f64>> {
    mult.check(instance)?;
    check_len(instance.n_vars(), state.len())?;
    Ok(polynomial_grad(instance, mult, state.as_slice()))
}

fn polynomial_grad(instance: &ProblemInstance, mult: &MultiplierSet, m: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; instance.n_vars()];
    instance
        .mean_field_objective()
        .add_grad_unchecked(m, 1.0, &mut out);
    for (h, &l) in instance.equalities().iter().zip(&mult.lambda) {
        if l != 0.0 {
            h.add_grad_unchecked(m, l, &mut out);
        }
    }
    for (g, &u) in instance.inequalities().iter().zip(&mult.mu) {
        if u != 0.0 {
            g.add_grad_unchecked(m, u, &mut out);
        }
    }
    out
}

/// `F(m) = L(m) - S(m)` with `kT = 1`.
pub fn free_energy(instance: &ProblemInstance, mult: &MultiplierSet, state: &MeanFieldState) -> Result<f64> {
    Ok(lagrangian(instance, mult, state)? - entropy(state))
}

/// `1 / (1 + exp(exponent))` with the exponent saturated, clamped to the
/// marginal bounds.
pub fn logistic_response(exponent: f64) -> f64 {
    let e = exponent.clamp(-EXPONENT_LIMIT, EXPONENT_LIMIT);
    clamp(1.0 / (1.0 + e.exp()))
}

/// Right-hand side of the self-consistency equations for every component.
pub fn response(instance: &ProblemInstance, mult: &MultiplierSet, state: &MeanFieldState) -> Result<Vec<f64>> {
    Ok(lagrangian_grad(instance, mult, state)?
        .into_iter()
        .map(logistic_response)
        .collect())
}

/// `max_i |m_i - sigma_i(m)|`.
pub fn residual(instance: &ProblemInstance, mult: &MultiplierSet, state: &MeanFieldState) -> Result<f64> {
    let sigma = response(instance, mult, state)?;
    Ok(max_abs_diff(state.as_slice(), &sigma))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One Jacobi sweep: `m_i <- (1 - theta) sigma_i(m) + theta m_i`, all
/// components computed from the pre-sweep state.
pub fn mf_sweep(
    instance: &ProblemInstance,
    mult: &MultiplierSet,
    state: &MeanFieldState,
    damping: f64,
) -> Result<MeanFieldState> {
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::Domain(format!("damping {damping} not in [0, 1)")));
    }
    let sigma = response(instance, mult, state)?;
    Ok(damped(state.as_slice(), &sigma, damping))
}

fn damped(m: &[f64], sigma: &[f64], damping: f64) -> MeanFieldState {
    MeanFieldState(
        sigma
            .iter()
            .zip(m)
            .map(|(s, old)| clamp((1.0 - damping) * s + damping * old))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub state: MeanFieldState,
    pub residual: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Sweeps from `m0` until the residual drops below `config.tolerance` or the
/// sweep budget runs out. Running out of budget is reported through
/// `converged`, not as an error.
pub fn solve_fixed_point(
    instance: &ProblemInstance,
    mult: &MultiplierSet,
    m0: &MeanFieldState,
    config: &MfConfig,
) -> Result<FixedPoint> {
    config.validate()?;
    check_len(instance.n_vars(), m0.len())?;
    let mut state = m0.clone();
    let mut sweeps = 0;
    loop {
        let sigma = response(instance, mult, &state)?;
        let res = max_abs_diff(state.as_slice(), &sigma);
        if res < config.tolerance || sweeps == config.max_sweeps {
            return Ok(FixedPoint {
                state,
                residual: res,
                sweeps,
                converged: res < config.tolerance,
            });
        }
        state = damped(state.as_slice(), &sigma, config.damping);
        sweeps += 1;
    }
}

/// Independent draws with `P(x_i = 1) = m_i`.
pub fn sample<R: Rng + ?Sized>(state: &MeanFieldState, rng: &mut R) -> Vec<bool> {
    state.0.iter().map(|&m| rng.gen::<f64>() < m).collect()
}

/// `x_i = 1` iff `m_i > 0.5`; ties round to 0.
pub fn round(state: &MeanFieldState) -> Vec<bool> {
    state.0.iter().map(|&m| m > 0.5).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
