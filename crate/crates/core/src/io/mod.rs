//! Scan and label ingestion, synthetic scenes, and grid containers.

mod grid;
mod kitti;
mod synthetic;

pub use grid::{grid_from_binary, grid_from_json, grid_to_binary, grid_to_json, load_grid, save_grid, GRID_MAGIC};
pub use kitti::{
    decode_labels_bytes, encode_scan, read_labeled_scan, read_labels, read_scan, read_scan_with, write_labels,
    write_scan, KittiBin, LabelRecord, Scan, ScanFormat,
};
pub use synthetic::{generate_synthetic, Annulus, RadialProfile, SynthesisSpec};

use crate::config::GridConfig;

/// Reads and validates a TOML grid config.
pub fn load_config(path: impl AsRef<std::path::Path>) -> crate::Result<GridConfig> {
    GridConfig::load(path)
}

pub fn save_config(path: impl AsRef<std::path::Path>, config: &GridConfig) -> crate::Result<()> {
    config.save(path)
}
