//! Experiment driver behind the `nlschwarz` binary.

pub mod config;
pub mod experiment;

pub use config::{ExperimentConfig, Plan, Problem};
pub use experiment::{cmd_mesh, cmd_report, cmd_solve};
