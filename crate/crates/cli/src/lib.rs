//! Library side of the `esbgk` command-line tool: configuration files, output
//! sinks and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod series;
pub mod verify;
