//! Rolling-sphere recentring: moves every skeleton point onto the pipe axis
//! by fitting a circle to the cloud points inside a growing sphere.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::circle::{fit_circle_2d_ransac, CircleFit, Point2, RollingSphereParams};
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Polyline, Vec3};
use crate::spatial::PointIndex;
use crate::synth::any_perpendicular;

/// Corrected points closer than this to an earlier one are dropped.
pub const DUPLICATE_TOLERANCE: f64 = 1e-6;

/// Fits with a radius above this multiple of the sphere radius, or below its
/// reciprocal, are rejected.
pub const MAX_RADIUS_FACTOR: f64 = 2.0;

/// Fits must explain at least this fraction of the gathered points.
pub const MIN_INLIER_FRACTION: f64 = 0.5;

/// Inliers must cover at least this much of the fitted circle (radians).
/// Shorter arcs fix the radius poorly under noise.
pub const MIN_ARC: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, PartialEq)]
pub struct Recentered {
    pub polyline: Polyline,
    /// Fitted radius of every output point, in order.
    pub radii: Vec<f64>,
    /// Input points dropped for lack of support or an implausible fit.
    pub deleted: usize,
}

/// Outcome at one skeleton point.
enum Step {
    Moved(Point3, f64),
    Deleted,
}

fn recenter_point(
    s: &Point3,
    dir: &Vec3,
    start_radius: f64,
    cloud: &PointCloud,
    index: &PointIndex,
    params: &RollingSphereParams,
    rng: &mut ChaCha8Rng,
) -> Step {
    let e1 = any_perpendicular(dir);
    let e2 = dir.cross(&e1);
    let mut radius = start_radius;
    let mut grown = 0;
    loop {
        let inside = index.within(s, radius);
        if inside.len() >= params.min_inlier_points {
            let flat: Vec<Point2> = inside
                .iter()
                .map(|&i| {
                    let v = cloud.points[i] - s;
                    Point2::new(v.dot(&e1), v.dot(&e2))
                })
                .collect();
            if let Ok(fit) = fit_circle_2d_ransac(&flat, params, rng) {
                if plausible(&fit, radius, flat.len()) && arc_coverage(&fit, &flat, params.ransac_inlier_threshold) >= MIN_ARC {
                    return Step::Moved(s + e1 * fit.center.x + e2 * fit.center.y, fit.radius);
                }
            }
        }
        if grown == params.max_growth_iterations {
            return Step::Deleted;
        }
        radius *= params.growth_factor;
        grown += 1;
    }
}

/// Gathered points lie within the sphere and near the fitted circle, so the
/// centre is at most `sphere + r` away. A circle much larger than the sphere
/// comes from a nearly flat patch, a much smaller one from a stray cluster,
/// and one that explains only a minority of the points from a mixed patch.
fn plausible(fit: &CircleFit, sphere: f64, gathered: usize) -> bool {
    fit.center.coords.norm() <= sphere + fit.radius
        && fit.radius <= MAX_RADIUS_FACTOR * sphere
        && fit.radius * MAX_RADIUS_FACTOR >= sphere
        && fit.inlier_count as f64 >= MIN_INLIER_FRACTION * gathered as f64
}

/// Angle of the fitted circle spanned by its inliers: the full turn minus
/// the largest angular gap between them.
fn arc_coverage(fit: &CircleFit, points: &[Point2], threshold: f64) -> f64 {
    let mut angles: Vec<f64> = points
        .iter()
        .filter(|p| ((*p - fit.center).norm() - fit.radius).abs() <= threshold)
        .map(|p| (p.y - fit.center.y).atan2(p.x - fit.center.x))
        .collect();
    if angles.len() < 2 {
        return 0.0;
    }
    angles.sort_by(f64::total_cmp);
    let wrap = angles[0] + TAU - angles[angles.len() - 1];
    let gap = angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max);
    TAU - gap
}

/// Recentres every skeleton point. The local axis points toward the next
/// skeleton point (the last point uses the previous one). The sphere starts
/// at the previous fitted radius and grows by `growth_factor` until it holds
/// `min_inlier_points` and yields a plausible circle whose inliers span at
/// least [`MIN_ARC`]; points that never do
/// within `max_growth_iterations` are deleted and their neighbours re-linked. Near-duplicate outputs are removed.
pub fn rolling_sphere_recenter(
    skeleton: &Polyline,
    cloud: &PointCloud,
    params: &RollingSphereParams,
    seed: u64,
) -> Result<Recentered> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(Error::Empty("cloud"));
    }
    let index = PointIndex::new(&cloud.points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = skeleton.points();
    let n = pts.len();
    let mut radius = params.initial_radius;
    let mut out: Vec<Point3> = Vec::new();
    let mut radii = Vec::new();
    let mut deleted = 0;
    for i in 0..n {
        let dir = if i + 1 < n { pts[i + 1] - pts[i] } else { pts[i] - pts[i - 1] }.normalize();
        match recenter_point(&pts[i], &dir, radius, cloud, &index, params, &mut rng) {
            Step::Moved(p, r) => {
                radius = r;
                if out.iter().all(|q| (q - p).norm() >= DUPLICATE_TOLERANCE) {
                    out.push(p);
                    radii.push(r);
                }
            }
            Step::Deleted => deleted += 1,
        }
    }
    if out.is_empty() {
        return Err(Error::RecenteringConsumedSkeleton);
    }
    if out.len() < 2 {
        return Err(Error::InvalidInput("recentering left a single skeleton point".into()));
    }
    Ok(Recentered {
        polyline: Polyline::new(out)?,
        radii,
        deleted,
    })
}

pub fn mean_radius(radii: &[f64]) -> Result<f64> {
    if radii.is_empty() {
        return Err(Error::Empty("radius list"));
    }
    Ok(radii.iter().sum::<f64>() / radii.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_polyline_distance;

    fn cylinder(r: f64, len: f64, half: bool) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..=(len / 0.01) as usize {
            let x = i as f64 * 0.01;
            for j in 0..48 {
                let a = j as f64 / 48.0 * std::f64::consts::TAU;
                if half && a.sin() < 0.0 {
                    continue;
                }
                pts.push(Point3::new(x, r * a.cos(), r * a.sin()));
            }
        }
        PointCloud::new(pts, "c").unwrap()
    }

    fn offset_skeleton(off: Vec3) -> Polyline {
        Polyline::new((0..=8).map(|i| Point3::new(0.1 + 0.1 * i as f64, 0.0, 0.0) + off).collect()).unwrap()
    }

    fn axis() -> Vec<Point3> {
        vec![Point3::new(-10.0, 0.0, 0.0), Point3::new(10.0, 0.0, 0.0)]
    }

    #[test]
    fn full_cylinder_offset_is_removed() {
        let r = 0.1;
        let out = rolling_sphere_recenter(&offset_skeleton(Vec3::new(0.0, 0.3 * r, 0.0)), &cylinder(r, 1.0, false), &RollingSphereParams::default(), 1).unwrap();
        for p in out.polyline.points() {
            assert!(point_polyline_distance(p, &axis()) < 0.02 * r, "{p:?}");
        }
        assert!((mean_radius(&out.radii).unwrap() - r).abs() < 0.05 * r);
    }

    #[test]
    fn half_cylinder_offset_is_removed() {
        let r = 0.1;
        let out = rolling_sphere_recenter(&offset_skeleton(Vec3::new(0.0, 0.0, 0.3 * r)), &cylinder(r, 1.0, true), &RollingSphereParams::default(), 1).unwrap();
        assert_eq!(out.polyline.len(), 9);
        for p in out.polyline.points() {
            assert!(point_polyline_distance(p, &axis()) < 0.05 * r, "{p:?}");
        }
        assert!((mean_radius(&out.radii).unwrap() - r).abs() < 0.05 * r);
    }

    #[test]
    fn point_in_empty_space_is_deleted() {
        let r = 0.1;
        let mut pts = offset_skeleton(Vec3::zeros()).into_points();
        pts.insert(4, Point3::new(0.45, 5.0, 5.0));
        let out = rolling_sphere_recenter(&Polyline::new(pts).unwrap(), &cylinder(r, 1.0, false), &RollingSphereParams::default(), 1).unwrap();
        // Its neighbours may go too, since their axis direction points at it.
        assert!(out.deleted >= 1);
        assert!(out.polyline.points().iter().all(|p| p.y.abs() < 0.01 && p.z.abs() < 0.01));
    }

    #[test]
    fn far_skeleton_consumes_everything() {
        let far = offset_skeleton(Vec3::new(0.0, 10.0, 0.0));
        let err = rolling_sphere_recenter(&far, &cylinder(0.1, 1.0, false), &RollingSphereParams::default(), 1).unwrap_err();
        assert_eq!(err.to_string(), "recentering consumed skeleton");
    }

    #[test]
    fn mean_radius_values() {
        assert!((mean_radius(&[0.1, 0.1, 0.1]).unwrap() - 0.1).abs() < 1e-15);
        assert!((mean_radius(&[0.1, 0.2]).unwrap() - 0.15).abs() < 1e-15);
        assert!(mean_radius(&[]).is_err());
    }
}
