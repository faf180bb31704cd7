//! Reproduction driver for `locsense`: TOML experiment configs, cached parallel sweeps
//! and flat CSV tables per figure panel.

pub mod cache;
pub mod config;
pub mod error;
pub mod figures;
pub mod run;
pub mod table;

pub use cache::{Cache, CACHE_ENV, DEFAULT_CACHE_DIR};
pub use config::{ExperimentConfig, Kind};
pub use error::{CliError, Result};
pub use run::{planned_units, run, ResultRecord, RunOptions};
