//! Experiment harness around [`lsem`]: strict TOML configuration,
//! subcommands and run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{execute, Command, Invocation};
pub use config::RunConfig;
pub use error::CliError;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
