//! Problem instances: `min f(x)` subject to `g_k(x) <= 0` and `h_l(x) = 0`
//! over binary `x`, plus structured views for knapsack-type problems.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::poly::{MultilinearPolynomial, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Kp,
    Qkp,
    Generic,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Kp => "kp",
            ProblemKind::Qkp => "qkp",
            ProblemKind::Generic => "generic",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kp" => Ok(ProblemKind::Kp),
            "qkp" => Ok(ProblemKind::Qkp),
            "generic" => Ok(ProblemKind::Generic),
            other => Err(Error::Validation(format!("unknown problem kind `{other}`"))),
        }
    }
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Builds from a full row-major array; rejects asymmetric input.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        check_len(n * n, data.len())?;
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::Validation(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Builds from the row-major upper triangle (diagonal included).
    pub fn from_upper_triangle(n: usize, upper: &[f64]) -> Result<Self> {
        check_len(n * (n + 1) / 2, upper.len())?;
        let mut m = Self::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m.set(i, j, upper[k]);
                k += 1;
            }
        }
        Ok(m)
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n + 1) / 2);
        for i in 0..self.n {
            out.extend_from_slice(&self.row(i)[i..]);
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    /// `x^T Q x` restricted to the set bits of a binary vector.
    pub fn quadratic_form_binary(&self, x: &[bool]) -> f64 {
        let selected: Vec<usize> = (0..self.n).filter(|&i| x[i]).collect();
        selected
            .iter()
            .map(|&i| {
                let row = self.row(i);
                selected.iter().map(|&j| row[j]).sum::<f64>()
            })
            .sum()
    }

    /// Number of nonzero entries strictly above the diagonal.
    pub fn off_diagonal_nonzeros(&self) -> usize {
        (0..self.n)
            .map(|i| self.row(i)[i + 1..].iter().filter(|&&v| v != 0.0).count())
            .sum()
    }
}

/// Linear knapsack data: `min -q.x  s.t.  w.x - d <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knapsack {
    pub gains: Vec<f64>,
    pub weights: Vec<f64>,
    pub capacity: f64,
}

/// Quadratic knapsack data: `min -x^T Q x  s.t.  w.x - d <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticKnapsack {
    pub matrix: SymMatrix,
    pub weights: Vec<f64>,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Structure {
    Generic,
    Knapsack(Knapsack),
    Quadratic(QuadraticKnapsack),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    n_vars: usize,
    /// `None` only for QKP, where the polynomial is rebuilt from the matrix.
    objective: Option<MultilinearPolynomial>,
    inequalities: Vec<MultilinearPolynomial>,
    equalities: Vec<MultilinearPolynomial>,
    structure: Structure,
}

/// Outcome of an exact feasibility check at a binary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// `g_k(x)` for every inequality; positive means violated.
    pub inequality_values: Vec<f64>,
    /// `h_l(x)` for every equality; nonzero means violated.
    pub equality_values: Vec<f64>,
}

impl ProblemInstance {
    /// General polynomial instance. All polynomials are canonicalized.
    pub fn generic(
        objective: MultilinearPolynomial,
        inequalities: Vec<MultilinearPolynomial>,
        equalities: Vec<MultilinearPolynomial>,
    ) -> Result<Self> {
        let n = objective.n_vars();
        for c in inequalities.iter().chain(&equalities) {
            if c.n_vars() != n {
                return Err(Error::Validation(format!(
                    "constraint over {} variables, objective over {n}",
                    c.n_vars()
                )));
            }
        }
        Ok(Self {
            n_vars: n,
            objective: Some(objective.canonicalize()),
            inequalities: inequalities.iter().map(|p| p.canonicalize()).collect(),
            equalities: equalities.iter().map(|p| p.canonicalize()).collect(),
            structure: Structure::Generic,
        })
    }

    pub fn knapsack(gains: Vec<f64>, weights: Vec<f64>, capacity: f64) -> Result<Self> {
        let n = gains.len();
        check_len(n, weights.len())?;
        validate_knapsack_arrays(&weights, capacity)?;
        if gains.iter().any(|&q| !q.is_finite() || q < 0.0) {
            return Err(Error::Validation("gains must be finite and nonnegative".into()));
        }
        let neg: Vec<f64> = gains.iter().map(|&q| -q).collect();
        Ok(Self {
            n_vars: n,
            objective: Some(MultilinearPolynomial::linear(&neg, 0.0)),
            inequalities: vec![MultilinearPolynomial::linear(&weights, -capacity)],
            equalities: Vec::new(),
            structure: Structure::Knapsack(Knapsack {
                gains,
                weights,
                capacity,
            }),
        })
    }

    pub fn quadratic_knapsack(matrix: SymMatrix, weights: Vec<f64>, capacity: f64) -> Result<Self> {
        let n = matrix.n();
        check_len(n, weights.len())?;
        validate_knapsack_arrays(&weights, capacity)?;
        if !matrix.is_nonnegative() || matrix.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "quadratic coefficients must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            n_vars: n,
            objective: None,
            inequalities: vec![MultilinearPolynomial::linear(&weights, -capacity)],
            equalities: Vec::new(),
            structure: Structure::Quadratic(QuadraticKnapsack {
                matrix,
                weights,
                capacity,
            }),
        })
    }

    /// The same problem with its structured view dropped, so every consumer
    /// falls back to the polynomial route.
    pub fn to_generic(&self) -> Self {
        Self {
            n_vars: self.n_vars,
            objective: Some(self.objective().into_owned()),
            inequalities: self.inequalities.clone(),
            equalities: self.equalities.clone(),
            structure: Structure::Generic,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn kind(&self) -> ProblemKind {
        match self.structure {
            Structure::Generic => ProblemKind::Generic,
            Structure::Knapsack(_) => ProblemKind::Kp,
            Structure::Quadratic(_) => ProblemKind::Qkp,
        }
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn as_knapsack(&self) -> Option<&Knapsack> {
        match &self.structure {
            Structure::Knapsack(k) => Some(k),
            _ => None,
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticKnapsack> {
        match &self.structure {
            Structure::Quadratic(q) => Some(q),
            _ => None,
        }
    }

    /// Weights and capacity of the single capacity constraint, for KP and QKP.
    pub fn capacity_constraint(&self) -> Option<(&[f64], f64)> {
        match &self.structure {
            Structure::Knapsack(k) => Some((&k.weights, k.capacity)),
            Structure::Quadratic(q) => Some((&q.weights, q.capacity)),
            Structure::Generic => None,
        }
    }

    /// Canonical objective polynomial. For QKP this is `-x^T Q x` reduced with
    /// `x_i^2 = x_i`, built on demand.
    pub fn objective(&self) -> Cow<'_, MultilinearPolynomial> {
        match (&self.objective, &self.structure) {
            (Some(p), _) => Cow::Borrowed(p),
            (None, Structure::Quadratic(q)) => Cow::Owned(qkp_objective_polynomial(&q.matrix)),
            (None, _) => unreachable!("only QKP omits the stored objective"),
        }
    }

    /// Objective part of the mean-field potential.
    ///
    /// For generic and KP instances this is the canonical objective, whose value
    /// at `m` is the exact mean-field average. For QKP it is the raw polynomial
    /// `-sum_i q_ii x_i x_i - sum_{i<j} q_ij x_i x_j`, whose gradient at `m` is
    /// `-2 q_ii m_i - sum_{j != i} q_ij m_j`.
    pub fn mean_field_objective(&self) -> Cow<'_, MultilinearPolynomial> {
        match &self.structure {
            Structure::Quadratic(q) => Cow::Owned(qkp_potential_polynomial(&q.matrix)),
            _ => self.objective(),
        }
    }

    pub fn inequalities(&self) -> &[MultilinearPolynomial] {
        &self.inequalities
    }

    pub fn equalities(&self) -> &[MultilinearPolynomial] {
        &self.equalities
    }

    /// True when the mean-field gradient does not depend on `m`.
    pub fn is_linear(&self) -> bool {
        match &self.structure {
            Structure::Knapsack(_) => true,
            Structure::Quadratic(_) => false,
            Structure::Generic => {
                self.objective().degree() <= 1
                    && self
                        .inequalities
                        .iter()
                        .chain(&self.equalities)
                        .all(|p| p.degree() <= 1)
            }
        }
    }

    /// Objective value at a binary point.
    pub fn objective_value(&self, x: &[bool]) -> Result<f64> {
        check_len(self.n_vars, x.len())?;
        Ok(match &self.structure {
            Structure::Knapsack(k) => -k
                .gains
                .iter()
                .zip(x)
                .filter(|(_, &b)| b)
                .map(|(q, _)| q)
                .sum::<f64>(),
            Structure::Quadratic(q) => -q.matrix.quadratic_form_binary(x),
            Structure::Generic => self.objective().eval_binary(x)?,
        })
    }

    /// Checks every constraint at a binary point. Constraints with integer
    /// coefficients are evaluated in exact integer arithmetic; others use a
    /// relative tolerance of `1e-9` on the coefficient scale.
    pub fn check_feasible(&self, x: &[bool]) -> Result<Feasibility> {
        check_len(self.n_vars, x.len())?;
        let mut feasible = true;
        let mut inequality_values = Vec::with_capacity(self.inequalities.len());
        for g in &self.inequalities {
            let (v, ok) = match g.eval_binary_exact(x)? {
                Some(exact) => (exact as f64, exact <= 0),
                None => {
                    let v = g.eval_binary(x)?;
                    (v, v <= 1e-9 * g.l1_norm().max(1.0))
                }
            };
            feasible &= ok;
            inequality_values.push(v);
        }
        let mut equality_values = Vec::with_capacity(self.equalities.len());
        for h in &self.equalities {
            let (v, ok) = match h.eval_binary_exact(x)? {
                Some(exact) => (exact as f64, exact == 0),
                None => {
                    let v = h.eval_binary(x)?;
                    (v, v.abs() <= 1e-9 * h.l1_norm().max(1.0))
                }
            };
            feasible &= ok;
            equality_values.push(v);
        }
        Ok(Feasibility {
            feasible,
            inequality_values,
            equality_values,
        })
    }

    pub fn is_feasible(&self, x: &[bool]) -> Result<bool> {
        Ok(self.check_feasible(x)?.feasible)
    }
}

fn validate_knapsack_arrays(weights: &[f64], capacity: f64) -> Result<()> {
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::Validation("weights must be finite and nonnegative".into()));
    }
    if !capacity.is_finite() {
        return Err(Error::Validation("capacity must be finite".into()));
    }
    Ok(())
}

fn qkp_objective_polynomial(q: &SymMatrix) -> MultilinearPolynomial {
    let n = q.n();
    let mut terms = Vec::new();
    for i in 0..n {
        let row = q.row(i);
        if row[i] != 0.0 {
            terms.push(Term::new(-row[i], vec![i]));
        }
        for (j, &v) in row.iter().enumerate().skip(i + 1) {
            if v != 0.0 {
                terms.push(Term::new(-2.0 * v, vec![i, j]));
            }
        }
    }
    MultilinearPolynomial::new(n, terms).expect("indices in range")
}

fn qkp_potential_polynomial(q: &SymMatrix) -> MultilinearPolynomial {
    let n = q.n();
    let mut terms = Vec::new();
    for i in 0..n {
        let row = q.row(i);
        if row[i] != 0.0 {
            terms.push(Term::new(-row[i], vec![i, i]));
        }
        for (j, &v) in row.iter().enumerate().skip(i + 1) {
            if v != 0.0 {
                terms.push(Term::new(-v, vec![i, j]));
            }
        }
    }
    MultilinearPolynomial::new(n, terms).expect("indices in range")
}
