//! Runners behind the command line tool: configuration, synthetic data,
//! verification oracles, training and timing.

pub mod bench;
pub mod config;
pub mod runner;
pub mod synthetic;
pub mod verify;
