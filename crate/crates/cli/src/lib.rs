//! Configuration, parameter sweeps and table output behind the `optoent` binary.

pub mod config;
pub mod sweep;
pub mod table;
