//! Synthetic pipes: cubic Hermite center lines, tube surface sampling, ground
//! truth and a pinhole ray-casting scanner.

pub mod dataset;
pub mod scan;
pub mod scene;

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{polyline_length, GroundTruth, Point3, PointCloud, Polyline, Vec3};

pub use scan::{virtual_scan, ScanOptions, ScanReport, ScanStation};
pub use scene::{PipeKind, Scene, ScenePipe};

/// Spacing of the densified ground-truth center line.
pub const GROUND_TRUTH_SPACING: f64 = 0.02;

/// A pipe as the scene defines it: a circle of `outer_radius` swept along a
/// Hermite spline through `control_points` with unit `tangents`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeSpec {
    control_points: Vec<Point3>,
    tangents: Vec<Vec3>,
    outer_radius: f64,
}

impl PipeSpec {
    pub fn new(control_points: Vec<Point3>, tangents: Vec<Vec3>, outer_radius: f64) -> Result<Self> {
        if control_points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "pipe needs at least 2 control points, got {}",
                control_points.len()
            )));
        }
        if tangents.len() != control_points.len() {
            return Err(Error::InvalidInput(format!(
                "{} tangents for {} control points",
                tangents.len(),
                control_points.len()
            )));
        }
        if !(outer_radius > 0.0 && outer_radius.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "outer radius must be positive, got {outer_radius}"
            )));
        }
        for (i, w) in control_points.windows(2).enumerate() {
            if (w[1] - w[0]).norm() <= 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "control points {i} and {} coincide (zero-length segment)",
                    i + 1
                )));
            }
        }
        let mut unit = Vec::with_capacity(tangents.len());
        for (i, t) in tangents.iter().enumerate() {
            let n = t.norm();
            if !(n > 1e-12 && n.is_finite()) {
                return Err(Error::InvalidInput(format!("tangent {i} is zero or non-finite")));
            }
            unit.push(t / n);
        }
        Ok(Self {
            control_points,
            tangents: unit,
            outer_radius,
        })
    }

    /// Straight pipe from `a` to `b`.
    pub fn straight(a: Point3, b: Point3, radius: f64) -> Result<Self> {
        let d = b - a;
        Self::new(vec![a, b], vec![d, d], radius)
    }

    /// Circular bend of `bend_radius` sweeping `angle` radians, starting at
    /// `start` heading along `dir` and turning toward `toward`. Control points
    /// are placed every 90 degrees at most.
    pub fn bend(
        start: Point3,
        dir: Vec3,
        toward: Vec3,
        bend_radius: f64,
        angle: f64,
        radius: f64,
    ) -> Result<Self> {
        let t0 = dir.normalize();
        let n0 = (toward - t0 * toward.dot(&t0)).normalize();
        let center = start + n0 * bend_radius;
        let pieces = ((angle / (0.5 * PI)).ceil() as usize).max(1);
        let mut pts = Vec::new();
        let mut tans = Vec::new();
        for i in 0..=pieces {
            let a = angle * i as f64 / pieces as f64;
            pts.push(center - n0 * (bend_radius * a.cos()) + t0 * (bend_radius * a.sin()));
            tans.push(t0 * a.cos() + n0 * a.sin());
        }
        Self::new(pts, tans, radius)
    }

    pub fn control_points(&self) -> &[Point3] {
        &self.control_points
    }

    pub fn tangents(&self) -> &[Vec3] {
        &self.tangents
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    pub fn spline(&self) -> HermiteSpline {
        HermiteSpline::new(self)
    }
}

/// Piecewise cubic Hermite curve with an arc-length table.
///
/// Tangent magnitudes per segment are `chord * 2 tan(theta/4) / sin(theta/2)`
/// where `theta` is the turn between the end tangents; that choice reproduces
/// circular arcs closely and reduces to the chord length for straight runs.
#[derive(Debug, Clone)]
pub struct HermiteSpline {
    p: Vec<Point3>,
    t: Vec<Vec3>,
    mag: Vec<f64>,
    // (global parameter u in [0, segments], cumulative arc length)
    table_u: Vec<f64>,
    table_s: Vec<f64>,
}

const TABLE_SAMPLES_PER_SEGMENT: usize = 256;

impl HermiteSpline {
    fn new(spec: &PipeSpec) -> Self {
        let p = spec.control_points.clone();
        let t = spec.tangents.clone();
        let mag = p
            .windows(2)
            .zip(t.windows(2))
            .map(|(pw, tw)| {
                let chord = (pw[1] - pw[0]).norm();
                let theta = tw[0].dot(&tw[1]).clamp(-1.0, 1.0).acos();
                if theta < 1e-6 {
                    chord
                } else {
                    chord * 2.0 * (theta / 4.0).tan() / (theta / 2.0).sin()
                }
            })
            .collect();
        let mut spline = Self {
            p,
            t,
            mag,
            table_u: Vec::new(),
            table_s: Vec::new(),
        };
        spline.build_table();
        spline
    }

    fn segments(&self) -> usize {
        self.p.len() - 1
    }

    fn build_table(&mut self) {
        let n = self.segments() * TABLE_SAMPLES_PER_SEGMENT;
        let mut u_prev = 0.0;
        let mut prev = self.eval(0.0);
        let mut s = 0.0;
        self.table_u = vec![0.0];
        self.table_s = vec![0.0];
        for i in 1..=n {
            let u = i as f64 / TABLE_SAMPLES_PER_SEGMENT as f64;
            // Simpson on |C'| for each table interval.
            let a = self.deriv(u_prev).norm();
            let m = self.deriv(0.5 * (u_prev + u)).norm();
            let b = self.deriv(u).norm();
            let ds = (u - u_prev) / 6.0 * (a + 4.0 * m + b);
            let cur = self.eval(u);
            s += ds.max((cur - prev).norm());
            self.table_u.push(u);
            self.table_s.push(s);
            u_prev = u;
            prev = cur;
        }
    }

    fn locate(&self, u: f64) -> (usize, f64) {
        let segs = self.segments();
        let u = u.clamp(0.0, segs as f64);
        let i = (u.floor() as usize).min(segs - 1);
        (i, u - i as f64)
    }

    /// Position at global parameter `u` in `[0, segments]`.
    pub fn eval(&self, u: f64) -> Point3 {
        let (i, s) = self.locate(u);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let m = self.mag[i];
        Point3::from(
            self.p[i].coords * h00
                + self.t[i] * (m * h10)
                + self.p[i + 1].coords * h01
                + self.t[i + 1] * (m * h11),
        )
    }

    pub fn deriv(&self, u: f64) -> Vec3 {
        let (i, s) = self.locate(u);
        let s2 = s * s;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let m = self.mag[i];
        self.p[i].coords * d00
            + self.t[i] * (m * d10)
            + self.p[i + 1].coords * d01
            + self.t[i + 1] * (m * d11)
    }

    pub fn length(&self) -> f64 {
        *self.table_s.last().unwrap()
    }

    /// Global parameter at arc length `s`.
    pub fn param_at(&self, s: f64) -> f64 {
        let total = self.length();
        if s <= 0.0 {
            return 0.0;
        }
        if s >= total {
            return self.segments() as f64;
        }
        let j = self.table_s.partition_point(|&x| x <= s).clamp(1, self.table_s.len() - 1);
        let (s0, s1) = (self.table_s[j - 1], self.table_s[j]);
        let f = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.table_u[j - 1] + f * (self.table_u[j] - self.table_u[j - 1])
    }

    /// Position and unit tangent at arc length `s`.
    pub fn at_arclength(&self, s: f64) -> (Point3, Vec3) {
        let u = self.param_at(s);
        let d = self.deriv(u);
        let tangent = if d.norm() > 1e-12 {
            d.normalize()
        } else {
            let (i, _) = self.locate(u);
            self.t[i]
        };
        (self.eval(u), tangent)
    }

    /// Samples at `n + 1` equally spaced arc lengths with exact end points.
    fn sample_uniform(&self, n: usize) -> Vec<(Point3, Vec3)> {
        let total = self.length();
        let last = self.p.len() - 1;
        (0..=n)
            .map(|k| {
                if k == 0 {
                    (self.p[0], self.t[0])
                } else if k == n {
                    (self.p[last], self.t[last])
                } else {
                    self.at_arclength(total * k as f64 / n as f64)
                }
            })
            .collect()
    }
}

/// Resamples the pipe's center line at approximately `spacing` arc length.
pub fn interpolate_spline(spec: &PipeSpec, spacing: f64) -> Result<Polyline> {
    Ok(interpolate_with_tangents(spec, spacing)?.0)
}

fn interpolate_with_tangents(spec: &PipeSpec, spacing: f64) -> Result<(Polyline, Vec<Vec3>)> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput(format!("spacing must be positive, got {spacing}")));
    }
    let spline = spec.spline();
    let n = ((spline.length() / spacing).round() as usize).max(1);
    let samples = spline.sample_uniform(n);
    let tangents = samples.iter().map(|s| s.1).collect();
    let line = Polyline::new(samples.into_iter().map(|s| s.0).collect())?;
    Ok((line, tangents))
}

/// Any unit vector perpendicular to `t`.
pub fn any_perpendicular(t: &Vec3) -> Vec3 {
    let a = if t.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (a - t * a.dot(t)).normalize()
}

/// Rotation-minimizing normals along sampled tangents (double reflection).
pub(crate) fn rotation_minimizing_normals(points: &[Point3], tangents: &[Vec3]) -> Vec<Vec3> {
    let mut normals = Vec::with_capacity(points.len());
    normals.push(any_perpendicular(&tangents[0]));
    for i in 0..points.len().saturating_sub(1) {
        let r0 = normals[i];
        let v1 = points[i + 1] - points[i];
        let c1 = v1.dot(&v1);
        if c1 < 1e-24 {
            normals.push(r0);
            continue;
        }
        let r_l = r0 - v1 * (2.0 / c1 * v1.dot(&r0));
        let t_l = tangents[i] - v1 * (2.0 / c1 * v1.dot(&tangents[i]));
        let v2 = tangents[i + 1] - t_l;
        let c2 = v2.dot(&v2);
        let r1 = if c2 < 1e-24 { r_l } else { r_l - v2 * (2.0 / c2 * v2.dot(&r_l)) };
        let t1 = tangents[i + 1];
        normals.push((r1 - t1 * r1.dot(&t1)).normalize());
    }
    normals
}

/// Uniformly samples the tube surface: arc length and angle are drawn
/// uniformly, so the expected count is `density * 2 pi r L`.
pub fn sample_pipe_surface<R: Rng>(
    spec: &PipeSpec,
    areal_density: f64,
    id: &str,
    rng: &mut R,
) -> Result<PointCloud> {
    if !(areal_density > 0.0) {
        return Err(Error::InvalidInput(format!(
            "areal density must be positive, got {areal_density}"
        )));
    }
    let spline = spec.spline();
    let length = spline.length();
    let r = spec.outer_radius;
    let count = (areal_density * 2.0 * PI * r * length).round() as usize;

    // Frame table at ~1 mm resolution; the frame at an arbitrary arc length is
    // the nearest table normal made exactly perpendicular to the local tangent.
    let n_frames = ((length / 1e-3).ceil() as usize).clamp(16, 200_000);
    let frames = spline.sample_uniform(n_frames);
    let fpts: Vec<Point3> = frames.iter().map(|f| f.0).collect();
    let ftan: Vec<Vec3> = frames.iter().map(|f| f.1).collect();
    let normals = rotation_minimizing_normals(&fpts, &ftan);

    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let s = rng.gen::<f64>() * length;
        let phi = rng.gen::<f64>() * 2.0 * PI;
        let (c, t) = spline.at_arclength(s);
        let k = ((s / length) * n_frames as f64).round() as usize;
        let u = (normals[k.min(n_frames)] - t * normals[k.min(n_frames)].dot(&t)).normalize();
        let v = t.cross(&u);
        points.push(c + (u * phi.cos() + v * phi.sin()) * r);
    }
    PointCloud::new(points, id)
}

/// Ground truth for evaluation: densified center line, unit tangents, radius
/// and center-line length.
pub fn make_ground_truth(spec: &PipeSpec, id: &str) -> Result<GroundTruth> {
    let (spline, tangents) = interpolate_with_tangents(spec, GROUND_TRUTH_SPACING)?;
    let axis_length = polyline_length(&spline);
    Ok(GroundTruth {
        id: id.to_string(),
        spline,
        tangents,
        outer_radius: spec.outer_radius,
        axis_length,
    })
}
