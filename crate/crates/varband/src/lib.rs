//! Batch tooling around `varband-core`: dataset files, the synthetic
//! fixture, pipeline stages, reports and plots. The `varband` binary is a
//! thin argument layer over [`pipeline::run_named_stage`].

pub mod checkpoint;
pub mod config;
pub mod labels;
pub mod loader;
pub mod npy;
pub mod pipeline;
pub mod report;
pub mod svg;
pub mod synthetic;
