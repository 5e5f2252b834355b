//! Experiment runner for robust generator inversion: fixture construction,
//! solves, λ-sweeps, recovery verification, simulations and metrics.

pub mod commands;
pub mod config;

pub use config::ExperimentConfig;
