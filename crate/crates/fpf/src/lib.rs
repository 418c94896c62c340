//! Experiment driver, file formats and command line for the collective
//! filters in `collective-core`.

pub mod cli;
pub mod config;
pub mod harness;
pub mod io;
pub mod oracle;

pub use config::{ConfigError, ExperimentConfig, OutputFormat};
pub use harness::{ExperimentOutput, HarnessError, ResultRow, SeedResult};
