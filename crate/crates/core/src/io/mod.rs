//! File formats: PLY clouds, loop configuration, dataset manifests, label
//! and metrics tables, and the run directory layout.

pub mod config;
pub mod manifest;
pub mod ply;
pub mod run_dir;
pub mod tables;
