//! Mean-field solver for constrained binary optimization.
//!
//! A problem `min f(x)` over `x in {0,1}^N` with polynomial inequality and
//! equality constraints is relaxed to a product of independent Bernoulli
//! marginals `m_i`. The free energy `L(m) - S(m)` of that distribution, with
//! `L` the Lagrangian averaged under the marginals, is stationary where
//! `m_i = 1 / (1 + exp(dL/dm_i))`. The solvers iterate this fixed point, tune
//! the multipliers, and read integer candidates off the marginals by rounding
//! or sampling.
//!
//! Knapsack (`kp`) and quadratic knapsack (`qkp`) instances have dedicated
//! fast paths; anything else goes through [`solver::solve_generic`].

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod generate;
pub mod instance;
pub mod io;
pub mod meanfield;
pub mod oracle;
pub mod poly;
pub mod solver;
pub mod stats;
