//! Experiment runner for `upwind-core`: TOML experiment definitions, a catalog
//! of built-in meshes and fields, and CSV/JSON artifacts.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod config;
pub mod experiments;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use experiments::{run, RunError};
