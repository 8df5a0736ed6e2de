//! Command-line front end: argument parsing, command dispatch and the
//! multi-run studies behind `verify`.

pub mod commands;
pub mod studies;

pub use commands::{run, Cli, CliError};
