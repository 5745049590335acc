//! Seeded instance generators.
//!
//! KP: strongly correlated instances, `w_i ~ U{1..R}`, `q_i = w_i + R/10`,
//! `d = floor(rho * sum w)`. The capacity fraction defaults to 0.5; solution
//! ratios depend on it.
//!
//! QKP: each pair `i < j` present with probability `density`, coefficients
//! `U{lo..hi}` (diagonal always present), weights `U{1..50}`, capacity
//! `U{50..sum w}`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, SymMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpGenSpec {
    pub n: usize,
    pub weight_range: u64,
    pub capacity_fraction: f64,
    pub seed: u64,
}

impl KpGenSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            weight_range: 1000,
            capacity_fraction: 0.5,
            seed,
        }
    }

    /// Additive gain offset, `R / 10`.
    pub fn correlation_offset(&self) -> u64 {
        self.weight_range / 10
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight_range < 1 {
            return Err(Error::Validation("weight range must be >= 1".into()));
        }
        if !(self.capacity_fraction > 0.0 && self.capacity_fraction < 1.0) {
            return Err(Error::Validation("capacity fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkpGenSpec {
    pub n: usize,
    pub density: f64,
    pub coeff_range: (u64, u64),
    pub weight_range: (u64, u64),
    pub seed: u64,
}

impl QkpGenSpec {
    pub fn new(n: usize, density: f64, seed: u64) -> Self {
        Self {
            n,
            density,
            coeff_range: (1, 100),
            weight_range: (1, 50),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Validation("density must lie in (0, 1]".into()));
        }
        let (clo, chi) = self.coeff_range;
        let (wlo, whi) = self.weight_range;
        if clo == 0 || wlo == 0 || clo > chi || wlo > whi {
            return Err(Error::Validation("ranges must be positive and ordered".into()));
        }
        Ok(())
    }
}

pub fn gen_kp_strong(spec: &KpGenSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = spec.correlation_offset();
    let weights: Vec<u64> = (0..spec.n)
        .map(|_| rng.gen_range(1..=spec.weight_range))
        .collect();
    let gains: Vec<f64> = weights.iter().map(|&w| (w + offset) as f64).collect();
    let total: u64 = weights.iter().sum();
    let capacity = (spec.capacity_fraction * total as f64).floor();
    ProblemInstance::knapsack(gains, weights.into_iter().map(|w| w as f64).collect(), capacity)
}

pub fn gen_qkp(spec: &QkpGenSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (clo, chi) = spec.coeff_range;
    let mut q = SymMatrix::zeros(n);
    for i in 0..n {
        q.set(i, i, rng.gen_range(clo..=chi) as f64);
        for j in (i + 1)..n {
            if spec.density >= 1.0 || rng.gen::<f64>() < spec.density {
                q.set(i, j, rng.gen_range(clo..=chi) as f64);
            }
        }
    }
    let (wlo, whi) = spec.weight_range;
    let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(wlo..=whi)).collect();
    let total: u64 = weights.iter().sum();
    let capacity = rng.gen_range(50.min(total)..=total) as f64;
    ProblemInstance::quadratic_knapsack(q, weights.into_iter().map(|w| w as f64).collect(), capacity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_item_gain_is_weight_plus_offset() {
        let inst = gen_kp_strong(&KpGenSpec::new(1, 42)).unwrap();
        let k = inst.as_knapsack().unwrap();
        assert_eq!(k.gains[0], k.weights[0] + 100.0);
    }

    #[test]
    fn kp_weights_in_range_and_capacity_rule() {
        for seed in 0..20 {
            let inst = gen_kp_strong(&KpGenSpec::new(200, seed)).unwrap();
            let k = inst.as_knapsack().unwrap();
            assert!(k.weights.iter().all(|&w| (1.0..=1000.0).contains(&w) && w.fract() == 0.0));
            let total: f64 = k.weights.iter().sum();
            assert_eq!(k.capacity, (0.5 * total).floor());
            assert!(inst.is_feasible(&[false; 200]).unwrap());
            let lightest = k.weights.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(lightest <= k.capacity);
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_kp_strong(&KpGenSpec::new(50, 7)).unwrap();
        let b = gen_kp_strong(&KpGenSpec::new(50, 7)).unwrap();
        assert_eq!(a, b);
        let c = gen_kp_strong(&KpGenSpec::new(50, 8)).unwrap();
        assert_ne!(a, c);
        let qa = gen_qkp(&QkpGenSpec::new(30, 0.5, 3)).unwrap();
        let qb = gen_qkp(&QkpGenSpec::new(30, 0.5, 3)).unwrap();
        assert_eq!(qa, qb);
    }

    #[test]
    fn full_density_fills_every_pair() {
        let inst = gen_qkp(&QkpGenSpec::new(40, 1.0, 1)).unwrap();
        let q = &inst.as_quadratic().unwrap().matrix;
        assert_eq!(q.off_diagonal_nonzeros(), 40 * 39 / 2);
    }

    #[test]
    fn quarter_density_fill_fraction() {
        // 19900 Bernoulli(0.25) pairs: sd ~ 0.0031, so [0.22, 0.28] is a > 9 sigma band.
        let inst = gen_qkp(&QkpGenSpec::new(200, 0.25, 12)).unwrap();
        let q = &inst.as_quadratic().unwrap().matrix;
        let frac = q.off_diagonal_nonzeros() as f64 / (200.0 * 199.0 / 2.0);
        assert!((0.22..=0.28).contains(&frac), "fill {frac}");
    }

    #[test]
    fn qkp_matrix_symmetric_nonnegative_with_valid_capacity() {
        for seed in 0..10 {
            let inst = gen_qkp(&QkpGenSpec::new(25, 0.5, seed)).unwrap();
            let qk = inst.as_quadratic().unwrap();
            let q = &qk.matrix;
            for i in 0..25 {
                assert!(q.get(i, i) >= 1.0);
                for j in 0..25 {
                    assert_eq!(q.get(i, j), q.get(j, i));
                    assert!(q.get(i, j) >= 0.0);
                }
            }
            let total: f64 = qk.weights.iter().sum();
            assert!(qk.capacity >= 50.0 && qk.capacity <= total);
            assert!(qk.weights.iter().all(|&w| (1.0..=50.0).contains(&w)));
        }
    }

    #[test]
    fn tiny_density_leaves_a_linear_problem() {
        let inst = gen_qkp(&QkpGenSpec::new(20, 1e-12, 4)).unwrap();
        let q = &inst.as_quadratic().unwrap().matrix;
        assert_eq!(q.off_diagonal_nonzeros(), 0);
        let x: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let linear: f64 = (0..20).filter(|&i| x[i]).map(|i| q.get(i, i)).sum();
        assert_eq!(inst.objective_value(&x).unwrap(), -linear);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = KpGenSpec::new(5, 0);
        s.capacity_fraction = 1.0;
        assert!(gen_kp_strong(&s).is_err());
        assert!(gen_qkp(&QkpGenSpec::new(5, 0.0, 0)).is_err());
    }
}
