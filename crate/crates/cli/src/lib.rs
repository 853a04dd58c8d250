//! Command-line driver: labeling, training, summarization, evaluation and
//! factor inspection, each writing its resolved configuration next to its
//! outputs.

pub mod commands;
pub mod config;
pub mod inspect;

pub use commands::{run, Cli, Command};
