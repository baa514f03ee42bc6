//! Batch front-end for reachkit: model files, command dispatch, plot data
//! and the golden example suite.
//!
//! - [`model`]: JSON model format and validation.
//! - [`run`]: the `reach`, `reach-inv`, `polyapprox` and `hybrid-reach`
//!   pipelines, run reports and exit codes.
//! - [`plot`]: CSV and SVG output for tubes and polygons.
//! - [`golden`]: criteria A1–A12 over the bundled models.

pub mod golden;
pub mod model;
pub mod plot;
pub mod run;
