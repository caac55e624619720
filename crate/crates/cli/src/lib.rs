//! Batch front end: scenario files, subcommands and exit codes.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{load_config, parse_config, write_config, ScenarioConfig};
pub use error::CliError;
