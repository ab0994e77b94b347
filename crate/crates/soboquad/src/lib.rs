//! Derivative-free trust-region optimization built on norm-minimizing
//! quadratic interpolation models.
//!
//! The model update chooses, among all quadratics that interpolate the
//! current sample set, the one whose change from the previous model is
//! smallest in a weighted Sobolev norm over a ball — with the classical
//! least-Frobenius-norm update available as the pure-Hessian special
//! case. The crate provides the model algebra, the bordered KKT system
//! and its low-rank inverse maintenance, the trust-region subproblems,
//! the solver driver, a set of benchmark problems, and performance/data
//! profile reduction for comparing solver configurations.

pub mod driver;
pub mod error;
pub mod kkt;
pub mod problems;
pub mod profiles;
pub mod quadratic;
pub mod set;
pub mod trsub;
pub mod update;

pub use error::{Error, Result};
