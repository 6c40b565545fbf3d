//! Experiment runner, file formats and command line for FDD-OFDM secret key
//! generation on top of `fdkg-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, Profile};
pub use error::{FdkgError, Result};
pub use fdkg_core as core;
