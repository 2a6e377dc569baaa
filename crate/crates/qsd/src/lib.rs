//! Experiment driver for the `qsd` binary: configuration files, presets,
//! parallel ensembles and CSV output on top of `qsd-core`.

pub mod config;
pub mod csv;
pub mod experiments;
pub mod parallel;
pub mod presets;
