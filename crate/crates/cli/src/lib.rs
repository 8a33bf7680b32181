//! Pipeline orchestration: one TOML config, one subcommand per stage.

pub mod commands;
pub mod config;
pub mod error;
pub mod scripted;

pub use config::RunConfig;
pub use error::CliError;
