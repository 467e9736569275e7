//! Scenario runner, sweeps, certificate reports and plot data export.

pub mod cli;
pub mod commands;
pub mod config;
pub mod decimate;
pub mod error;

pub use cli::run;
