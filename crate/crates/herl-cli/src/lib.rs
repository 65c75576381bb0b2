//! Experiment harness around the `herl` library: flat-file configuration,
//! end-to-end benchmark runs with CSV/JSON artifacts, and a small framed
//! protocol for shipping encrypted jobs to an untrusted solver.

pub mod config;
pub mod experiment;
pub mod protocol;
