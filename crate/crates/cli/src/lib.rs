//! Experiment harness for `gcvae-core`: config, runs, sweeps, commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use config::RunConfig;
pub use error::{CliError, Stage};
