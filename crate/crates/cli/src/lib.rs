//! Experiment runner for percolated regular graphs.
//!
//! Configs are TOML files (or flags) describing a host family, parameter
//! grids and seeds; every run writes a CSV whose header embeds the resolved
//! config and its SHA-256, so results can be regenerated byte for byte.

pub mod app;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{Experiment, ExperimentConfig, Grid, Mode};
pub use error::CliError;
pub use output::{Output, Table};
