//! File formats and subcommands behind the `rayalign` binary.

pub mod camt;
pub mod commands;
mod error;
pub mod json;
pub mod ply;
pub mod scene;

pub use error::{CliError, CliResult};
