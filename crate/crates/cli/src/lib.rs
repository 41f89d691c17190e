//! Command-line driver for `cpdegen`: argument parsing, TOML run
//! configurations and the four subcommands.

pub mod args;
pub mod commands;
pub mod config;

pub use commands::{run, Failure, Outcome};
pub use config::{CommandKind, RunConfig, OUT_DIR_ENV};
