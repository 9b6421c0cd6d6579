//! Library half of the `snn` binary, split out so integration tests can
//! drive config parsing, plotting, and the command bodies directly.

pub mod commands;
pub mod config;
pub mod plot;
