//! Command-line companion to the `ergoflow` library: run configuration,
//! text artifacts, caching, SVG rendering, report tables, and the staged
//! experiment pipeline.

pub mod artifacts;
pub mod cache;
pub mod config;
pub mod pipeline;
pub mod render;
pub mod report;
