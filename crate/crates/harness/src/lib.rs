//! Experiment harness: config parsing, cross-validated training runs for the
//! dynamic-weighting and baseline arms, grid search, and CSV/text reports.

pub mod config;
pub mod experiment;
pub mod grid;
pub mod report;

pub use config::{Arm, DataSource, ExperimentConfig};
pub use experiment::{run_experiment, ExperimentResults};
pub use grid::{grid_search, GridOutcome};
