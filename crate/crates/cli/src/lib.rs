//! Experiment runner for the star-code simulator: parameter files, sweeps
//! over parameter grids, figure presets and report files.

pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod report;
pub mod sweep;

pub use error::{CliError, Result};
