//! Pipeline orchestration and the rating service behind the `hypnokit`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;
pub mod server;
pub mod session;

pub use config::{PipelineConfig, Workspace};
pub use error::CliError;
