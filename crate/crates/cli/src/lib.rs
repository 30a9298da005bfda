//! Command-line plumbing for the `geneoh` binary: file formats, layered
//! configuration and the command implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

pub use error::{CliError, CliResult};
