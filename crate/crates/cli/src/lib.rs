//! Command-line front end for the feature-importance engine: configuration,
//! run orchestration, result documents, SVG charts and the benchmark grid.

pub mod app;
pub mod benchmark;
pub mod config;
pub mod error;
pub mod num;
pub mod run;
pub mod svg;

pub use app::run_cli;
pub use config::{Method, RunConfig};
pub use error::{CliError, CliResult};
pub use run::{execute, ResultDocument};
