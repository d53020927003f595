//! Ramer-Douglas-Peucker polyline simplification.

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Point3, Polyline};

/// Default tolerance factor relative to the mean radius.
pub const DEFAULT_RDP_FACTOR: f64 = 0.6;

/// Indices kept by RDP with tolerance `eps`: both ends plus every point that
/// deviates more than `eps` from the chord of its current sub-range.
pub fn rdp_indices(points: &[Point3], eps: f64) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0, n - 1)];
    while let Some((a, b)) = stack.pop() {
        if b <= a + 1 {
            continue;
        }
        let mut best = (0.0, 0);
        for i in a + 1..b {
            let d = point_segment_distance(&points[i], &points[a], &points[b]);
            if d > best.0 {
                best = (d, i);
            }
        }
        if best.0 > eps {
            keep[best.1] = true;
            stack.push((a, best.1));
            stack.push((best.1, b));
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// RDP with `eps = factor * mean_radius`.
pub fn rdp_simplify(curve: &Polyline, mean_radius: f64, factor: f64) -> Result<Polyline> {
    if !(mean_radius > 0.0) {
        return Err(Error::InvalidInput(format!("mean radius must be positive, got {mean_radius}")));
    }
    if !(factor >= 0.0) {
        return Err(Error::InvalidInput(format!("rdp factor must be non-negative, got {factor}")));
    }
    let eps = factor * mean_radius;
    let pts = curve.points();
    Polyline::new(rdp_indices(pts, eps).into_iter().map(|i| pts[i]).collect())
}
