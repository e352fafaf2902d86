//! Command-line front end for the `cmperiodic` model library.
//!
//! The binary is a thin wrapper over [`commands::run`]; the modules are public
//! so that tests and other tools can drive the same code paths.

pub mod commands;
pub mod config;
pub mod plot;

pub use commands::{run, Cli, CliError, Command};
pub use config::{parse_config, to_toml, ConfigError, RunConfig};
