//! Experiment runner for diffusion-driven semantic communication.
//!
//! Reads a TOML experiment config, runs seeded simulations, codec training
//! and hyperparameter sweeps on top of `diffsc-core`, and writes CSV tables.

pub mod config;
pub mod error;
pub mod experiment;
pub mod params_io;
pub mod table;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::AppError;
pub use experiment::{run_simulate, run_sweep};
pub use table::{emit_csv, Table};
