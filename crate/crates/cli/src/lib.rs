//! Command-line front-end for the sumprobe pipeline.

pub mod config;
pub mod stages;
