//! Command-line front end for the `so3lab` simulator.

pub mod commands;
pub mod config;
pub mod csv;
pub mod report;
