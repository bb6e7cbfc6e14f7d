//! Batch front end for mean field coarse correlated equilibrium experiments.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Command, ConfigError, Layout, RunConfig};
pub use run::{run, Outcome};
