//! File formats, configuration, parallel bootstrap and the command-line
//! pipeline around `disparity-core`.

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod run;
pub mod runner;

pub use config::{Mode, RunConfig};
pub use error::{CliError, Result};
pub use run::{run, Overrides};
pub use runner::RayonRunner;
