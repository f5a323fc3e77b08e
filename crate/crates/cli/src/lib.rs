//! Command-line front end: JSON configs, reports, sweeps.

pub mod commands;
pub mod config;
pub mod report;
pub mod sweep;

pub use commands::{run, run_args, Cli, Command, Outcome};
