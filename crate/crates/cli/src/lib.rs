//! Command-line front end: long-CSV ingestion, TOML run configuration, and
//! the `fit`, `simulate` and `select` commands with their output files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_fit, cmd_select, cmd_simulate, RunOverrides, SimOverrides};
pub use error::{Category, CliError, CliResult};
