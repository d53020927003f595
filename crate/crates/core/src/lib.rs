//! Reconstruction of parametric pipe models (center line, radius, length,
//! hull mesh) from incomplete point clouds, plus a synthetic scan generator
//! and volume-overlap evaluation.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod recon;
pub mod refine;
pub mod skeleton;
pub mod smooth;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    polyline_length, polyline_tangents, GroundTruth, PipeModel, Point3, PointCloud, Polyline, SkeletonGraph,
    TriMesh, Vec3, VoxelGrid,
};
