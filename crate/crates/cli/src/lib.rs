//! Command-line front end: configuration, CSV artifacts and subcommands.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Cli, Command, ExitStatus, OUT_DIR_ENV};
pub use config::{ConfigError, ConfigFile, Overrides, RunConfig};
