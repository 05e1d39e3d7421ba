//! Concrete models: birth–death chains with catastrophes and the adaptation
//! diffusion with its auxiliary bounding processes.
pub mod bdc;
pub mod config;
pub mod csbp;
pub mod descent;
pub mod diffusion;
pub mod transitory;

pub use bdc::{
    build_bdc, build_bdnu, nonuniformity_experiment, BdcParams, BdnuParams, BoundaryPolicy,
    RateFamily,
};
pub use config::{DiffusionModel, ModelConfig, MuSpec};
pub use csbp::{csbp_extinction, csbp_laplace};
pub use descent::ydp_descent_check;
pub use diffusion::{discretize, simulate_diffusion, DiffusionSpec};
pub use transitory::{escape_moment_mc, escape_study, Region, TransitoryDecomposition};
