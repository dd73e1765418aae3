//! Command-line driver and live-flow service.

pub mod args;
pub mod commands;
pub mod serve;
