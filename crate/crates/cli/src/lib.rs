//! Command-line front end: configuration, commands and result files.

pub mod commands;
pub mod config;
pub mod export;
