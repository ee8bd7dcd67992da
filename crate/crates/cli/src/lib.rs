//! Library half of the `lqconic` command-line tool: document formats and
//! command implementations.

pub mod commands;
pub mod csv;
pub mod document;
pub mod error;
pub mod result;

pub use error::{CliError, Result};
