//! Configuration, scenarios, sweeps and report files.

pub mod config;
pub mod report;
pub mod scenario;
pub mod sweep;
