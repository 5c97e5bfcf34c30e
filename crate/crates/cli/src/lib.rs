//! Command-line surface for the nitrom library: dataset and model
//! persistence, evaluation metrics, and the subcommand implementations.

pub mod commands;
pub mod io;
pub mod metrics;

pub use commands::{run, Cli};
