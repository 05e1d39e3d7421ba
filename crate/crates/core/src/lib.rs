//! Quasi-stationary distributions of sub-Markovian processes: exact
//! semigroup numerics, assumption certificates, a constructive coupling,
//! model builders and Monte Carlo estimators.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod convergence;
pub mod coupling;
pub mod eigen;
pub mod error;
pub mod generator;
pub mod grid;
pub mod mc;
pub mod models;
pub mod semigroup;
pub mod vector;

pub use eigen::{killed_perron_rate, solve_eigentriple, spectral_gap, EigenPair};
pub use error::{QsdError, Result};
pub use generator::{GeneratorDoc, SubMarkovGenerator};
pub use semigroup::{
    dcne, semigroup_apply, semigroup_apply_right, survival_capacity_t, Uniformizer,
};
pub use vector::{tv_distance, ProbabilityVector};
