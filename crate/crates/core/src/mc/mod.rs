//! Monte Carlo estimators cross-checking the exact engine.
pub mod fleming_viot;
pub mod gillespie;
pub mod qprocess;
pub mod rng;
