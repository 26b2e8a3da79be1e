//! Configuration, file formats and subcommands of the `wavecip` tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod ini;
pub mod io;

pub use commands::RunContext;
pub use config::RunConfig;
pub use error::CliError;
