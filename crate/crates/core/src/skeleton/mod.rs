//! Curve skeleton extraction: Laplacian contraction of the cloud followed by
//! graph construction on the contracted points.

use std::collections::BTreeMap;

use crate::geometry::Point3;

pub mod contract;
pub mod graph;
pub mod laplacian;

pub use contract::{contract, ContractedCloud, ContractionParams};
pub use graph::{build_skeleton_graph, collapse_edges, farthest_point_sample};
pub use laplacian::{build_laplacian, CsrMatrix};

/// Cotangent weights are clamped to this magnitude. Larger clamps let
/// sliver triangles of one-sided scans dominate and shorten the skeleton.
pub const DEFAULT_MAX_COT: f64 = 20.0;

/// Default node spacing for the skeleton graph.
pub const DEFAULT_SAMPLE_RADIUS: f64 = 0.02;

/// Replaces the points of every occupied voxel by their centroid. Output is
/// ordered by voxel key, so it does not depend on input order.
pub fn voxel_downsample(points: &[Point3], voxel: f64) -> Vec<Point3> {
    let mut cells: BTreeMap<[i64; 3], (nalgebra::Vector3<f64>, usize)> = BTreeMap::new();
    for p in points {
        let key = [
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        ];
        let e = cells.entry(key).or_insert((nalgebra::Vector3::zeros(), 0));
        e.0 += p.coords;
        e.1 += 1;
    }
    cells.into_values().map(|(s, n)| Point3::from(s / n as f64)).collect()
}

/// Voxel-downsamples with the smallest voxel from the sequence
/// `min_voxel * 1.25^i` that leaves at most `max_points` points. Returns
/// the input unchanged if it is already small enough.
pub fn downsample_to(points: &[Point3], max_points: usize, min_voxel: f64) -> Vec<Point3> {
    if points.len() <= max_points {
        return points.to_vec();
    }
    let mut voxel = min_voxel;
    loop {
        let out = voxel_downsample(points, voxel);
        if out.len() <= max_points {
            return out;
        }
        voxel *= 1.25;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsampling_keeps_centroids_and_respects_budget() {
        let pts: Vec<Point3> = (0..1000).map(|i| Point3::new(i as f64 * 0.001, 0.0, 0.0)).collect();
        let out = voxel_downsample(&pts, 0.1);
        assert_eq!(out.len(), 10);
        assert!((out[0].x - 0.0495).abs() < 1e-9);
        let small = downsample_to(&pts, 50, 0.001);
        assert!(small.len() <= 50 && small.len() > 20);
        assert_eq!(downsample_to(&pts, 5000, 0.001), pts);
    }
}
