//! Command-line front end and review API for `dataref-core`.

pub mod cli;
pub mod commands;
pub mod server;
