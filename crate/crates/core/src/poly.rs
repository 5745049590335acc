//! Sparse polynomials over binary variables.
//!
//! A [`MultilinearPolynomial`] is a list of [`Term`]s, each a coefficient times a
//! product of variables. Terms may be supplied in raw form (repeated indices,
//! duplicate subsets); [`MultilinearPolynomial::canonicalize`] applies
//! `x_i^2 = x_i`, merges duplicate subsets and drops zero coefficients.
//!
//! Evaluation treats the term literally, so a raw term `x_i x_i` evaluates to
//! `p_i^2` at a real point. On binary points raw and canonical forms agree.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// `coeff * prod(x_i for i in vars)`. An empty `vars` is the constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub vars: Vec<usize>,
}

impl Term {
    pub fn new(coeff: f64, vars: impl Into<Vec<usize>>) -> Self {
        Self {
            coeff,
            vars: vars.into(),
        }
    }

    pub fn constant(coeff: f64) -> Self {
        Self {
            coeff,
            vars: Vec::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.vars.len()
    }

    fn value(&self, point: &[f64]) -> f64 {
        self.vars.iter().fold(self.coeff, |acc, &i| acc * point[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilinearPolynomial {
    n_vars: usize,
    terms: Vec<Term>,
}

impl MultilinearPolynomial {
    /// Builds a polynomial from raw terms. Fails if any index is out of range or
    /// any coefficient is not finite.
    pub fn new(n_vars: usize, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            if !t.coeff.is_finite() {
                return Err(Error::Malformed(format!(
                    "non-finite coefficient {}",
                    t.coeff
                )));
            }
            if let Some(&bad) = t.vars.iter().find(|&&i| i >= n_vars) {
                return Err(Error::Malformed(format!(
                    "variable index {bad} out of range for {n_vars} variables"
                )));
            }
        }
        Ok(Self { n_vars, terms })
    }

    pub fn zero(n_vars: usize) -> Self {
        Self {
            n_vars,
            terms: Vec::new(),
        }
    }

    /// `sum_i coeffs[i] * x_i + constant`, already canonical.
    pub fn linear(coeffs: &[f64], constant: f64) -> Self {
        let mut terms = Vec::with_capacity(coeffs.len() + 1);
        if constant != 0.0 {
            terms.push(Term::constant(constant));
        }
        terms.extend(
            coeffs
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(i, &c)| Term::new(c, vec![i])),
        );
        Self {
            n_vars: coeffs.len(),
            terms,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(Term::degree).max().unwrap_or(0)
    }

    /// True when every term has strictly increasing indices, subsets are unique
    /// and no coefficient is zero.
    pub fn is_canonical(&self) -> bool {
        let sorted = self
            .terms
            .iter()
            .all(|t| t.coeff != 0.0 && t.vars.windows(2).all(|w| w[0] < w[1]));
        if !sorted {
            return false;
        }
        let mut keys: Vec<&[usize]> = self.terms.iter().map(|t| t.vars.as_slice()).collect();
        keys.sort_unstable();
        keys.windows(2).all(|w| w[0] != w[1])
    }

    /// Canonical form: indices deduplicated and sorted within each term, terms
    /// sharing a subset merged, zero coefficients dropped. Terms are ordered by
    /// their variable subset.
    pub fn canonicalize(&self) -> Self {
        let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for t in &self.terms {
            let mut vars = t.vars.clone();
            vars.sort_unstable();
            vars.dedup();
            *merged.entry(vars).or_insert(0.0) += t.coeff;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(vars, coeff)| Term { coeff, vars })
            .collect();
        Self {
            n_vars: self.n_vars,
            terms,
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        check_len(self.n_vars, point.len())?;
        Ok(self.eval_unchecked(point))
    }

    pub(crate) fn eval_unchecked(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(point)).sum()
    }

    /// Evaluates at a binary point: a term contributes its coefficient iff all of
    /// its variables are set.
    pub fn eval_binary(&self, x: &[bool]) -> Result<f64> {
        check_len(self.n_vars, x.len())?;
        Ok(self
            .terms
            .iter()
            .filter(|t| t.vars.iter().all(|&i| x[i]))
            .map(|t| t.coeff)
            .sum())
    }

    /// Exact evaluation at a binary point when every coefficient is an integer
    /// representable in `f64` without loss. Returns `None` otherwise.
    pub fn eval_binary_exact(&self, x: &[bool]) -> Result<Option<i128>> {
        check_len(self.n_vars, x.len())?;
        let mut acc: i128 = 0;
        for t in &self.terms {
            let Some(c) = exact_integer(t.coeff) else {
                return Ok(None);
            };
            if t.vars.iter().all(|&i| x[i]) {
                acc += c;
            }
        }
        Ok(Some(acc))
    }

    pub fn grad(&self, point: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_vars, point.len())?;
        let mut out = vec![0.0; self.n_vars];
        self.add_grad_unchecked(point, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale * grad(point)`. Product rule over term positions, so raw
    /// terms with repeated indices differentiate as powers.
    pub(crate) fn add_grad_unchecked(&self, point: &[f64], scale: f64, out: &mut [f64]) {
        for t in &self.terms {
            let c = scale * t.coeff;
            match t.vars.as_slice() {
                [] => {}
                [i] => out[*i] += c,
                [i, j] => {
                    out[*i] += c * point[*j];
                    out[*j] += c * point[*i];
                }
                vars => {
                    for (p, &i) in vars.iter().enumerate() {
                        let rest = vars
                            .iter()
                            .enumerate()
                            .filter(|&(q, _)| q != p)
                            .fold(c, |acc, (_, &j)| acc * point[j]);
                        out[i] += rest;
                    }
                }
            }
        }
    }

    /// Sum of absolute coefficients, used as a scale for float comparisons.
    pub fn l1_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    pub fn has_integer_coefficients(&self) -> bool {
        self.terms.iter().all(|t| exact_integer(t.coeff).is_some())
    }
}

const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0; // 2^53

fn exact_integer(c: f64) -> Option<i128> {
    (c.fract() == 0.0 && c.abs() <= EXACT_LIMIT).then_some(c as i128)
}

/// Free-function form of [`MultilinearPolynomial::canonicalize`].
pub fn canonicalize(poly: &MultilinearPolynomial) -> MultilinearPolynomial {
    poly.canonicalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(n: usize, terms: &[(f64, &[usize])]) -> MultilinearPolynomial {
        MultilinearPolynomial::new(n, terms.iter().map(|(c, v)| Term::new(*c, v.to_vec())).collect())
            .unwrap()
    }

    #[test]
    fn repeated_index_collapses() {
        let p = poly(1, &[(3.0, &[0, 0])]).canonicalize();
        assert_eq!(p.terms(), &[Term::new(3.0, vec![0])]);
    }

    #[test]
    fn cancelling_terms_vanish() {
        let p = poly(2, &[(2.0, &[0, 1]), (-2.0, &[1, 0])]).canonicalize();
        assert!(p.is_zero());
    }

    #[test]
    fn duplicate_subsets_merge() {
        let p = poly(2, &[(1.0, &[0]), (1.0, &[1]), (1.0, &[0])]).canonicalize();
        assert_eq!(p.terms(), &[Term::new(2.0, vec![0]), Term::new(1.0, vec![1])]);
        assert!(p.is_canonical());
    }

    #[test]
    fn out_of_range_index_is_malformed() {
        let err = MultilinearPolynomial::new(2, vec![Term::new(1.0, vec![2])]).unwrap_err();
        assert!(matches!(err, Error::Malformed(_)));
    }

    #[test]
    fn eval_examples() {
        assert_eq!(MultilinearPolynomial::zero(3).eval(&[0.3, 0.1, 0.9]).unwrap(), 0.0);
        let p = poly(2, &[(2.0, &[0, 1])]);
        assert_eq!(p.eval(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(p.eval(&[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn eval_rejects_wrong_length() {
        let p = poly(2, &[(2.0, &[0, 1])]);
        assert!(matches!(p.eval(&[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
        assert!(p.grad(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn grad_examples() {
        let lin = MultilinearPolynomial::linear(&[1.5, -2.0], 4.0);
        assert_eq!(lin.grad(&[0.2, 0.7]).unwrap(), vec![1.5, -2.0]);
        assert_eq!(lin.grad(&[0.9, 0.1]).unwrap(), vec![1.5, -2.0]);
        let p = poly(2, &[(1.0, &[0, 1])]);
        assert_eq!(p.grad(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn raw_square_differentiates_as_power() {
        let p = poly(2, &[(3.0, &[1, 1])]);
        assert_eq!(p.eval(&[0.0, 0.5]).unwrap(), 0.75);
        assert_eq!(p.grad(&[0.0, 0.5]).unwrap(), vec![0.0, 3.0]);
    }

    fn random_poly(rng: &mut ChaCha8Rng, n: usize, n_terms: usize, max_deg: usize) -> MultilinearPolynomial {
        let terms = (0..n_terms)
            .map(|_| {
                let deg = rng.gen_range(0..=max_deg);
                let vars: Vec<usize> = (0..deg).map(|_| rng.gen_range(0..n)).collect();
                // quarter-integer coefficients keep every partial sum exact
                let c = loop {
                    let c = rng.gen_range(-20i32..=20);
                    if c != 0 {
                        break c as f64 / 4.0;
                    }
                };
                Term::new(c, vars)
            })
            .collect();
        MultilinearPolynomial::new(n, terms).unwrap()
    }

    fn central_difference(p: &MultilinearPolynomial, point: &[f64], i: usize, h: f64) -> f64 {
        let mut up = point.to_vec();
        let mut dn = point.to_vec();
        up[i] += h;
        dn[i] -= h;
        (p.eval(&up).unwrap() - p.eval(&dn).unwrap()) / (2.0 * h)
    }

    #[test]
    fn grad_matches_finite_differences_degree_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let p = random_poly(&mut rng, 6, 15, 3).canonicalize();
            for _ in 0..100 {
                let point: Vec<f64> = (0..6).map(|_| rng.gen_range(0.05..0.95)).collect();
                let g = p.grad(&point).unwrap();
                for (i, gi) in g.iter().enumerate() {
                    let fd = central_difference(&p, &point, i, 1e-5);
                    let scale = gi.abs().max(1.0);
                    assert!((gi - fd).abs() / scale < 1e-6, "component {i}: {gi} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn canonical_form_preserves_binary_values_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 4, 8, 12] {
            for _ in 0..4 {
                let raw = random_poly(&mut rng, n, 3 * n, 4);
                let canon = raw.canonicalize();
                let mut x = vec![false; n];
                for mask in 0u32..(1 << n) {
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi = mask >> i & 1 == 1;
                    }
                    let point: Vec<f64> = x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                    let a = raw.eval(&point).unwrap();
                    let b = canon.eval(&point).unwrap();
                    assert_eq!(a, b, "mask {mask}");
                    assert_eq!(canon.eval_binary(&x).unwrap(), b);
                }
            }
        }
    }

    #[test]
    fn integer_polynomials_evaluate_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10;
        let terms = (0..30)
            .map(|_| {
                let deg = rng.gen_range(0..=3);
                Term::new(
                    rng.gen_range(-1000i64..1000) as f64,
                    (0..deg).map(|_| rng.gen_range(0..n)).collect::<Vec<_>>(),
                )
            })
            .collect();
        let raw = MultilinearPolynomial::new(n, terms).unwrap();
        let canon = raw.canonicalize();
        for mask in 0u32..(1 << n) {
            let x: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            assert_eq!(
                raw.eval_binary_exact(&x).unwrap(),
                canon.eval_binary_exact(&x).unwrap()
            );
        }
        let frac = poly(1, &[(0.5, &[0])]);
        assert_eq!(frac.eval_binary_exact(&[true]).unwrap(), None);
    }

    proptest! {
        #[test]
        fn duplicating_an_index_keeps_binary_values(
            seed in any::<u64>(),
            mask in 0u32..(1 << 7),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 7;
            let p = random_poly(&mut rng, n, 10, 3);
            let mut dup = p.terms().to_vec();
            for t in dup.iter_mut().filter(|t| !t.vars.is_empty()) {
                let k = rng.gen_range(0..t.vars.len());
                let v = t.vars[k];
                t.vars.insert(k, v);
            }
            let dup = MultilinearPolynomial::new(n, dup).unwrap();
            let x: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            prop_assert_eq!(p.eval_binary(&x).unwrap(), dup.eval_binary(&x).unwrap());
            prop_assert_eq!(p.canonicalize(), dup.canonicalize());
        }

        #[test]
        fn canonicalize_is_idempotent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_poly(&mut rng, 5, 12, 4).canonicalize();
            prop_assert!(c.is_canonical());
            prop_assert_eq!(c.canonicalize(), c);
        }
    }
}
