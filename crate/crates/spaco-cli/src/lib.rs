//! Library surface of the experiment runner, exposed so integration tests
//! can drive experiments without shelling out.

pub mod config;
pub mod csvio;
pub mod experiments;
pub mod runner;

pub use config::Config;
pub use experiments::{
    run_ablation, run_basin_grid, run_check, run_convergence, AblationOutcome, BasinCell,
    BasinOutcome, ConvergenceOutcome,
};
