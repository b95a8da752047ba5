//! Command-line front end for the `slowfast` library.

pub mod commands;
pub mod config;
