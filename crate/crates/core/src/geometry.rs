//! Shared geometric data model: clouds, polylines, pipe models, meshes and voxel grids.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Minimum separation between consecutive polyline points.
pub const MIN_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub instance_id: String,
    pub class_label: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, instance_id: impl Into<String>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            points,
            instance_id: instance_id.into(),
            class_label: "pipe".to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, v: &Vec3) -> Self {
        Self {
            points: self.points.iter().map(|p| p + v).collect(),
            ..self.clone()
        }
    }

    /// Axis-aligned bounds, `None` for an empty cloud.
    pub fn aabb(&self) -> Option<(Point3, Point3)> {
        aabb(&self.points)
    }
}

pub fn is_finite(p: &Point3) -> bool {
    p.coords.iter().all(|c| c.is_finite())
}

pub fn aabb(points: &[Point3]) -> Option<(Point3, Point3)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    Some((lo, hi))
}

pub fn aabb_volume(points: &[Point3]) -> f64 {
    match aabb(points) {
        Some((lo, hi)) => (hi - lo).iter().product(),
        None => 0.0,
    }
}

/// Ordered sequence of at least two points with no coincident neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point3>,
}

impl Polyline {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::PolylineTooShort(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::NonFinite(i));
        }
        for (i, w) in points.windows(2).enumerate() {
            if (w[1] - w[0]).norm() <= MIN_SEPARATION {
                return Err(Error::DuplicatePoint {
                    index: i,
                    next: i + 1,
                });
            }
        }
        Ok(Self { points })
    }

    /// Drops points closer than `tol` to their predecessor, then validates.
    pub fn from_points_dedup(points: Vec<Point3>, tol: f64) -> Result<Self> {
        let tol = tol.max(MIN_SEPARATION);
        let mut out: Vec<Point3> = Vec::with_capacity(points.len());
        for p in points {
            match out.last() {
                Some(q) if (p - q).norm() <= tol => {}
                _ => out.push(p),
            }
        }
        Self::new(out)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Point3 {
        self.points[0]
    }

    pub fn last(&self) -> Point3 {
        self.points[self.points.len() - 1]
    }

    pub fn length(&self) -> f64 {
        polyline_length(self)
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points }
    }

    /// Cumulative arc length at every vertex, starting at 0.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.points.len());
        let mut s = 0.0;
        acc.push(0.0);
        for w in self.points.windows(2) {
            s += (w[1] - w[0]).norm();
            acc.push(s);
        }
        acc
    }

    /// Point at arc length `s` (clamped to the curve).
    pub fn point_at(&self, s: f64) -> Point3 {
        let cum = self.cumulative_lengths();
        point_at_arclength(&self.points, &cum, s)
    }

    pub fn map(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
        }
    }
}

pub(crate) fn point_at_arclength(points: &[Point3], cum: &[f64], s: f64) -> Point3 {
    let total = *cum.last().unwrap();
    if s <= 0.0 {
        return points[0];
    }
    if s >= total {
        return points[points.len() - 1];
    }
    let j = cum.partition_point(|&c| c <= s).clamp(1, points.len() - 1);
    let seg = cum[j] - cum[j - 1];
    let t = if seg > 0.0 { (s - cum[j - 1]) / seg } else { 0.0 };
    points[j - 1] + (points[j] - points[j - 1]) * t
}

/// Closest point on segment `ab` to `p`, with its parameter in `[0, 1]`.
pub fn closest_on_segment(p: &Point3, a: &Point3, b: &Point3) -> (Point3, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, 0.0);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, t)
}

pub fn point_segment_distance(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    (p - closest_on_segment(p, a, b).0).norm()
}

/// Distance from `p` to the nearest point of `line`.
pub fn point_polyline_distance(p: &Point3, line: &[Point3]) -> f64 {
    if line.len() == 1 {
        return (p - line[0]).norm();
    }
    line.windows(2)
        .map(|w| point_segment_distance(p, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
}

pub fn polyline_length(p: &Polyline) -> f64 {
    p.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Central-difference unit tangents; one-sided at the ends.
pub fn polyline_tangents(p: &Polyline) -> Vec<Vec3> {
    let pts = &p.points;
    let n = pts.len();
    (0..n)
        .map(|i| {
            let d = if i == 0 {
                pts[1] - pts[0]
            } else if i == n - 1 {
                pts[n - 1] - pts[n - 2]
            } else {
                pts[i + 1] - pts[i - 1]
            };
            // A zero central difference means the curve folds back on itself;
            // fall back to the incoming segment.
            if d.norm() > MIN_SEPARATION {
                d.normalize()
            } else {
                (pts[i] - pts[i - 1]).normalize()
            }
        })
        .collect()
}

/// Undirected skeleton graph over contracted points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkeletonGraph {
    pub nodes: Vec<Point3>,
    /// Unordered pairs stored as `(min, max)`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl SkeletonGraph {
    /// Normalizes edge order and rejects self-loops, duplicates and
    /// out-of-range indices.
    pub fn new(nodes: Vec<Point3>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop at node {a}")));
            }
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::InvalidInput(format!("edge ({a}, {b}) out of range")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidInput(format!("duplicate edge {e:?}")));
            }
            norm.push(e);
        }
        norm.sort_unstable();
        Ok(Self { nodes, edges: norm })
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        adj
    }

    pub fn degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Number of 3-cycles, by enumeration.
    pub fn triangle_count(&self) -> usize {
        let adj = self.adjacency();
        let mut count = 0;
        for &(a, b) in &self.edges {
            count += adj[a]
                .iter()
                .filter(|&&c| c > b && adj[b].binary_search(&c).is_ok())
                .count();
        }
        count
    }
}

/// Reconstructed parametric pipe.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeModel {
    pub spline: Polyline,
    pub tangents: Vec<Vec3>,
    pub mean_radius: f64,
    pub axis_length: f64,
}

impl PipeModel {
    pub fn new(spline: Polyline, mean_radius: f64) -> Result<Self> {
        if !(mean_radius > 0.0 && mean_radius.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "mean radius must be positive, got {mean_radius}"
            )));
        }
        let tangents = polyline_tangents(&spline);
        let axis_length = polyline_length(&spline);
        Ok(Self {
            spline,
            tangents,
            mean_radius,
            axis_length,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub id: String,
    pub spline: Polyline,
    pub tangents: Vec<Vec3>,
    pub outer_radius: f64,
    pub axis_length: f64,
}

impl GroundTruth {
    pub fn as_model(&self) -> PipeModel {
        PipeModel {
            spline: self.spline.clone(),
            tangents: self.tangents.clone(),
            mean_radius: self.outer_radius,
            axis_length: self.axis_length,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Signed volume by summing tetrahedra against the origin. Positive for
    /// outward-oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0]].coords;
                let b = self.vertices[t[1]].coords;
                let c = self.vertices[t[2]].coords;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Every undirected edge has exactly two incident triangles.
    pub fn is_watertight(&self) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().all(|&c| c == 2)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }
}

/// Regular axis-aligned grid geometry. Cell `(i, j, k)` spans
/// `origin + [i, i+1) * voxel_size` along x, etc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point3,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Point3 {
        let h = self.voxel_size;
        Point3::new(
            self.origin.x + (i as f64 + 0.5) * h,
            self.origin.y + (j as f64 + 0.5) * h,
            self.origin.z + (k as f64 + 0.5) * h,
        )
    }
}

/// Dense boolean occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            occupancy: vec![false; spec.cell_count()],
            spec,
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn occupied_volume(&self) -> f64 {
        self.occupied_count() as f64 * self.spec.voxel_size.powi(3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Translation3};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pl(v: &[[f64; 3]]) -> Polyline {
        Polyline::new(v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()).unwrap()
    }

    #[test]
    fn length_of_simple_polylines() {
        assert_eq!(polyline_length(&pl(&[[0., 0., 0.], [1., 0., 0.]])), 1.0);
        assert_eq!(
            polyline_length(&pl(&[[0., 0., 0.], [1., 0., 0.], [1., 1., 0.]])),
            2.0
        );
    }

    #[test]
    fn length_of_circle_polygon_matches_chord_sum() {
        let n = 100;
        let pts: Vec<Point3> = (0..=n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                Point3::new(t.cos(), t.sin(), 0.0)
            })
            .collect();
        let len = polyline_length(&Polyline::new(pts).unwrap());
        let expected = 2.0 * n as f64 * (PI / n as f64).sin();
        assert!((len - expected).abs() < 1e-12, "{len} vs {expected}");
    }

    #[test]
    fn rejects_duplicates_and_short_input() {
        assert!(matches!(
            Polyline::new(vec![Point3::origin()]),
            Err(Error::PolylineTooShort(1))
        ));
        assert!(matches!(
            Polyline::new(vec![Point3::origin(), Point3::origin()]),
            Err(Error::DuplicatePoint { .. })
        ));
        assert!(Polyline::new(vec![Point3::origin(), Point3::new(f64::NAN, 0., 0.)]).is_err());
    }

    #[test]
    fn tangents_straight_and_corner() {
        let t = polyline_tangents(&pl(&[[0., 0., 0.], [1., 0., 0.], [2., 0., 0.]]));
        for v in t {
            assert!((v - Vec3::x()).norm() < 1e-12);
        }
        let t = polyline_tangents(&pl(&[[0., 0., 0.], [1., 0., 0.], [1., 1., 0.]]));
        let h = 0.5f64.sqrt();
        assert!((t[1] - Vec3::new(h, h, 0.0)).norm() < 1e-12);
        assert!((t[0] - Vec3::x()).norm() < 1e-12);
        assert!((t[2] - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn tangents_on_quarter_circle_follow_analytic_derivative() {
        let n = 90;
        let pts: Vec<Point3> = (0..n)
            .map(|i| {
                let a = 0.5 * PI * i as f64 / (n - 1) as f64;
                Point3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        let tangents = polyline_tangents(&Polyline::new(pts).unwrap());
        for (i, t) in tangents.iter().enumerate() {
            let a = 0.5 * PI * i as f64 / (n - 1) as f64;
            let exact = Vec3::new(-a.sin(), a.cos(), 0.0);
            let angle = t.dot(&exact).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 2.0, "point {i}: {angle} deg");
        }
    }

    #[test]
    fn watertight_and_volume_of_tetrahedron() {
        let mesh = TriMesh {
            vertices: vec![
                Point3::new(0., 0., 0.),
                Point3::new(1., 0., 0.),
                Point3::new(0., 1., 0.),
                Point3::new(0., 0., 1.),
            ],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        };
        assert!(mesh.is_watertight());
        assert!((mesh.signed_volume() - 1.0 / 6.0).abs() < 1e-12);
        let open = TriMesh {
            triangles: mesh.triangles[..3].to_vec(),
            ..mesh
        };
        assert!(!open.is_watertight());
    }

    fn arb_polyline() -> impl Strategy<Value = Polyline> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 2..20).prop_filter_map(
            "coincident points",
            |v| Polyline::new(v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect()).ok(),
        )
    }

    proptest! {
        #[test]
        fn length_is_rigid_invariant(
            p in arb_polyline(),
            axis in (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64),
            angle in -3.0..3.0f64,
            shift in (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64),
        ) {
            let rot = Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(Vec3::new(axis.0, axis.1, axis.2)), angle);
            let tr = Translation3::new(shift.0, shift.1, shift.2);
            let q = p.map(|x| tr * (rot * x));
            let (a, b) = (polyline_length(&p), polyline_length(&q));
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            prop_assert!((polyline_length(&p.reversed()) - a).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn tangents_are_unit(p in arb_polyline()) {
            for t in polyline_tangents(&p) {
                prop_assert!((t.norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}
