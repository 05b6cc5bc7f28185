//! Reproducible command-line runs over the channel simulator, the
//! statistical fits and the generative model.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::Log;
pub use config::{Run, RunConfig};
pub use error::{CliError, Result};
