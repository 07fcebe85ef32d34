//! Sparse cylindrical voxelization of LiDAR point clouds with uniform and
//! non-uniform radial partitions, plus the diagnostics used to compare
//! partition schemes.
//!
//! ```
//! use nucvox::{voxelize, GridConfig, PointCloud};
//!
//! let cloud = PointCloud::from_xyzi(&[[3.0, 4.0, -1.0, 0.5]]).unwrap();
//! let grid = voxelize(&cloud, &GridConfig::default()).unwrap();
//! assert_eq!(grid.len(), 1);
//! ```

pub mod analysis;
pub mod cloud;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod voxelizer;

pub use analysis::{
    analyze, compare_schemes, density_profile, encoding_error, nonempty_counts, receptive_profile, AnalysisOptions,
    AnalysisReport, ComparisonReport, DistanceBands,
};
pub use cloud::PointCloud;
pub use config::{GridConfig, OutOfRangePolicy, PartitionScheme};
pub use error::{Error, Result};
pub use geometry::{
    build_boundaries, cell_volume, multiscale_boundaries, multiscale_interval, radial_index, radial_interval,
    radial_intervals, receptive_length, to_cylindrical, CartesianPoint, CylindricalPoint, RadialBoundaries,
};
pub use voxelizer::{
    decode_labels, multiscale_voxelize, voxel_index, voxelize, SparseVoxelGrid, Voxel, VoxelIndex, Voxelizer,
};
