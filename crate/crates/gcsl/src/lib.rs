//! Command-line runner, configuration and file formats for `gcsl-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod trajlog;

pub use error::{CliError, Result};
