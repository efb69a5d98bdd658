//! Configuration-driven runner for the mass-constrained Allen–Cahn experiments.

pub mod config;
pub mod render;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{execute, Command, Format, Options, Outcome, RunError};
