//! Command line, run configuration and file formats for `rgvfm-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, Result};
