//! Command-line front end for `qkd-core`: configuration files, sweeps,
//! calibration and tabular output.

pub mod calibrate;
pub mod config;
pub mod error;
pub mod report;
pub mod run;
