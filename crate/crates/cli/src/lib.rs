//! Library side of the `lssid` command-line tool: run configuration, file
//! formats and the commands themselves.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
