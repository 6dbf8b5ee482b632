//! Command-line front end for `wssr-core`: INI configuration, CSV traces,
//! binary checkpoints and the run loop with resume support.

pub mod checkpoint;
pub mod config;
pub mod runner;
pub mod trace;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{ConfigError, RunConfig};
pub use runner::{execute, RunError, RunOutcome};
