//! Command-line front end: scenario configs, trajectory files and the
//! `simulate`, `equilibrium`, `montecarlo`, `scenario` and `analyze`
//! commands.
pub mod commands;
pub mod config;
pub mod error;
pub mod table;
