//! IO companion for `gtp-core`: binary feature and checkpoint formats, JSON
//! dataset manifests, heatmap export, and the `gtp` command-line tool.

pub mod error;
pub mod formats;
pub mod heatmap;
pub mod manifest;
