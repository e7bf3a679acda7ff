//! Experiment front end: JSON configs, single runs, pruning-rate sweeps and
//! communication-ledger reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod ledger;
pub mod output;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use experiment::{Experiment, SweepCell};
