//! Extends a shortened skeleton at both ends toward the cloud's extent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{closest_on_segment, Point3, PointCloud, Polyline, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElongationParams {
    /// Cloud points farther than this from an end are ignored.
    pub search_distance: f64,
    /// Spacing of the appended points.
    pub spacing: f64,
    /// Candidates must lie within this multiple of the radius estimate from
    /// the extension ray.
    pub tube_factor: f64,
    /// The terminal direction is taken over the last chord at least this
    /// multiple of the radius estimate long.
    pub direction_span_factor: f64,
}

impl Default for ElongationParams {
    fn default() -> Self {
        Self {
            search_distance: 0.5,
            spacing: 0.02,
            tube_factor: 1.5,
            direction_span_factor: 2.0,
        }
    }
}

impl ElongationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("search_distance", self.search_distance),
            ("spacing", self.spacing),
            ("tube_factor", self.tube_factor),
            ("direction_span_factor", self.direction_span_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Points used for the radius estimate, at most this many.
const RADIUS_SAMPLE: usize = 4000;

/// Robust radius estimate: the 90th percentile distance from cloud points to
/// the skeleton, over points whose closest skeleton location is interior.
pub fn skeleton_radius_estimate(skeleton: &Polyline, cloud: &PointCloud) -> Option<f64> {
    let pts = skeleton.points();
    let stride = cloud.len().div_ceil(RADIUS_SAMPLE).max(1);
    let mut d: Vec<f64> = cloud
        .points
        .iter()
        .step_by(stride)
        .filter_map(|p| {
            let mut best = (f64::INFINITY, false);
            for (i, w) in pts.windows(2).enumerate() {
                let (q, t) = closest_on_segment(p, &w[0], &w[1]);
                let dist = (p - q).norm();
                if dist < best.0 {
                    let at_end = (i == 0 && t <= 0.0) || (i == pts.len() - 2 && t >= 1.0);
                    best = (dist, at_end);
                }
            }
            (!best.1).then_some(best.0)
        })
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let k = ((d.len() as f64 * 0.9).ceil() as usize).clamp(1, d.len()) - 1;
    Some(d[k])
}

/// Extension length beyond `end` along unit `dir`: the largest projection of
/// any candidate point, or 0 without candidates.
fn extension(end: &Point3, dir: &Vec3, cloud: &PointCloud, params: &ElongationParams, tube: f64) -> f64 {
    let mut ext: f64 = 0.0;
    for p in &cloud.points {
        let v = p - end;
        if v.norm() > params.search_distance {
            continue;
        }
        let along = v.dot(dir);
        if along <= 0.0 {
            continue;
        }
        let lateral = (v - dir * along).norm();
        if lateral <= tube {
            ext = ext.max(along);
        }
    }
    ext
}

/// Unit direction of the last chord at least `span` long, or of the whole
/// polyline when it is shorter.
fn end_direction(points: &[Point3], span: f64) -> Vec3 {
    let end = points[points.len() - 1];
    let from = points.iter().rev().skip(1).find(|p| (end - *p).norm() >= span).unwrap_or(&points[0]);
    (end - from).normalize()
}

fn extend(points: &mut Vec<Point3>, dir: Vec3, ext: f64, spacing: f64) {
    let end = points[points.len() - 1];
    let steps = (ext / spacing + 1e-9).floor() as usize;
    for k in 1..=steps {
        points.push(end + dir * (spacing * k as f64));
    }
}

/// Appends points at `spacing` along the terminal directions (chords over the
/// last `direction_span_factor` radius estimates at each end) up to the
/// farthest cloud point
/// found ahead of each end. Candidates must lie within `search_distance` of
/// the end and inside a tube of `tube_factor` times the radius estimate
/// around the extension ray. Interior points are never moved.
pub fn elongate(skeleton: &Polyline, cloud: &PointCloud, params: &ElongationParams) -> Result<Polyline> {
    params.validate()?;
    if cloud.is_empty() {
        return Ok(skeleton.clone());
    }
    let Some(radius) = skeleton_radius_estimate(skeleton, cloud) else {
        return Ok(skeleton.clone());
    };
    let tube = params.tube_factor * radius;
    let span = params.direction_span_factor * radius;
    let mut pts = skeleton.points().to_vec();
    let n = pts.len();
    let end_dir = end_direction(&pts, span);
    let end_ext = extension(&pts[n - 1], &end_dir, cloud, params, tube);
    let mut rev = pts.clone();
    rev.reverse();
    let start_dir = end_direction(&rev, span);
    let start_ext = extension(&pts[0], &start_dir, cloud, params, tube);

    extend(&mut pts, end_dir, end_ext, params.spacing);
    pts.reverse();
    extend(&mut pts, start_dir, start_ext, params.spacing);
    pts.reverse();
    Polyline::new(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tube_cloud(x0: f64, x1: f64, r: f64) -> PointCloud {
        let mut pts = Vec::new();
        let n = ((x1 - x0) / 0.01).round() as usize;
        for i in 0..=n {
            let x = x0 + (x1 - x0) * i as f64 / n as f64;
            for j in 0..24 {
                let a = j as f64 / 24.0 * std::f64::consts::TAU;
                pts.push(Point3::new(x, r * a.cos(), r * a.sin()));
            }
        }
        PointCloud::new(pts, "t").unwrap()
    }

    fn line(x0: f64, x1: f64, n: usize) -> Polyline {
        Polyline::new((0..n).map(|i| Point3::new(x0 + (x1 - x0) * i as f64 / (n - 1) as f64, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn extends_to_cloud_extent() {
        let cloud = tube_cloud(0.0, 2.0, 0.1);
        let p = ElongationParams::default();
        let out = elongate(&line(0.2, 1.8, 17), &cloud, &p).unwrap();
        let (first, last) = (out.first(), out.last());
        assert!(first.x <= 0.0 + p.spacing && first.x >= -1e-9, "{first:?}");
        assert!(last.x >= 2.0 - p.spacing && last.x <= 2.0 + 1e-9, "{last:?}");
        // Interior untouched.
        let inner = line(0.2, 1.8, 17);
        let k = out.points().iter().position(|q| (q - inner.first()).norm() < 1e-12).unwrap();
        assert_eq!(&out.points()[k..k + 17], inner.points());
    }

    #[test]
    fn nothing_beyond_the_ends_changes_nothing() {
        let cloud = tube_cloud(0.2, 1.8, 0.1);
        let sk = line(0.2, 1.8, 9);
        assert_eq!(elongate(&sk, &cloud, &ElongationParams::default()).unwrap(), sk);
    }

    #[test]
    fn never_passes_the_farthest_candidate() {
        let cloud = tube_cloud(0.0, 1.0, 0.05);
        let out = elongate(&line(0.3, 0.7, 5), &cloud, &ElongationParams::default()).unwrap();
        assert!(out.last().x <= 1.0 + 1e-9 && out.first().x >= -1e-9);
    }

    #[test]
    fn far_side_object_is_ignored() {
        // Stray points of a neighbouring object beside and beyond the end.
        let mut pts = tube_cloud(0.0, 1.0, 0.05).points;
        pts.extend((0..200).map(|i| Point3::new(0.9 + 0.002 * i as f64, 0.3, 0.0)));
        let cloud = PointCloud::new(pts, "t").unwrap();
        let out = elongate(&line(0.2, 0.8, 7), &cloud, &ElongationParams::default()).unwrap();
        assert!(out.last().x <= 1.0 + 1e-9, "{:?}", out.last());
    }

    #[test]
    fn terminal_direction_spans_several_points() {
        let cloud = tube_cloud(0.0, 2.0, 0.1);
        // The last point is kinked sideways; a two-point direction would
        // head out of the tube.
        let mut pts = line(0.2, 1.6, 15).into_points();
        pts.push(Point3::new(1.65, 0.02, 0.0));
        let out = elongate(&Polyline::new(pts).unwrap(), &cloud, &ElongationParams::default()).unwrap();
        let last = out.last();
        assert!(last.x > 1.9 && last.y.abs() < 0.06, "{last:?}");
    }
}
