//! File formats, audio front end and command implementations for the
//! `choreo` command-line tool.

pub mod audio;
pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod io;

pub use error::{CliError, Result};
