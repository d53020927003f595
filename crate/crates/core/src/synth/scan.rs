//! Pinhole-camera ray casting against analytic tubes.
//!
//! Each pipe becomes a chain of cylinder segments joined by spheres, so the
//! solid is exactly the set of points within `r` of the densified center line.
//! Pipe ends are closed by flat disks that block rays but produce no points.
//! The first entry into any primitive is the first entry into the union, so
//! the nearest entry wins.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::scene::ScenePipe;
use super::interpolate_spline;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Vec3};

/// Gives a 90 degree horizontal field of view at 4:3.
pub const DEFAULT_VFOV_DEG: f64 = 73.739_795_291_688;
pub const DEFAULT_MAX_RANGE: f64 = 20.0;

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanStation {
    pub position: Point3,
    pub yaw_step_deg: f64,
    /// Image width and height in pixels.
    pub resolution: [usize; 2],
    pub vfov_deg: f64,
    /// Far clip distance.
    pub max_range: f64,
}

impl ScanStation {
    pub fn new(position: Point3, yaw_step_deg: f64, resolution: [usize; 2], vfov_deg: f64) -> Result<Self> {
        if !(yaw_step_deg > 0.0 && yaw_step_deg <= 360.0) {
            return Err(Error::InvalidInput(format!("yaw_step_deg {yaw_step_deg} out of range")));
        }
        let images = 360.0 / yaw_step_deg;
        if (images - images.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "yaw_step_deg {yaw_step_deg} does not divide 360"
            )));
        }
        if resolution[0] < 2 || resolution[1] < 2 {
            return Err(Error::InvalidInput(format!(
                "resolution {}x{} below 2x2",
                resolution[0], resolution[1]
            )));
        }
        if !(vfov_deg > 0.0 && vfov_deg < 180.0) {
            return Err(Error::InvalidInput(format!("vfov_deg {vfov_deg} out of (0, 180)")));
        }
        if !crate::geometry::is_finite(&position) {
            return Err(Error::InvalidInput("station position not finite".into()));
        }
        Ok(Self {
            position,
            yaw_step_deg,
            resolution,
            vfov_deg,
            max_range: DEFAULT_MAX_RANGE,
        })
    }

    /// Station with the default 10 degree yaw step, 256x192 images and 90
    /// degree horizontal field of view.
    pub fn at(position: Point3) -> Self {
        Self::new(position, 10.0, [256, 192], DEFAULT_VFOV_DEG).expect("defaults are valid")
    }

    pub fn with_max_range(mut self, max_range: f64) -> Result<Self> {
        if !(max_range > 0.0) {
            return Err(Error::InvalidInput(format!("max_range {max_range} must be positive")));
        }
        self.max_range = max_range;
        Ok(self)
    }

    pub fn image_count(&self) -> usize {
        (360.0 / self.yaw_step_deg).round() as usize
    }

    fn half_fov_tangents(&self) -> (f64, f64) {
        let tv = (0.5 * self.vfov_deg.to_radians()).tan();
        let th = tv * self.resolution[0] as f64 / self.resolution[1] as f64;
        (th, tv)
    }
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    /// Center-line sampling used to build the tube primitives.
    pub tube_spacing: f64,
    /// Isotropic Gaussian jitter; zero disables it.
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            tube_spacing: 0.01,
            jitter_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScanReport {
    pub rays_cast: u64,
    pub images_skipped: u64,
    pub hits_per_pipe: Vec<usize>,
    /// Pipes that received no points at all.
    pub empty: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Cylinder {
        a: Point3,
        axis: Vec3,
        len: f64,
        cap_start: bool,
        cap_end: bool,
    },
    /// Joint between segments. Near the pipe ends a joint sphere can poke
    /// out past the flat end; `clip` keeps only the side facing inward.
    Sphere {
        c: Point3,
        clip: [Option<(Point3, Vec3)>; 2],
    },
}

#[derive(Debug, Clone, Copy)]
struct Primitive {
    shape: Shape,
    radius: f64,
    pipe: u32,
    lo: Point3,
    hi: Point3,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    pipe: u32,
    // Caps block rays without producing points.
    record: bool,
}

impl Primitive {
    fn centroid(&self) -> Point3 {
        nalgebra::center(&self.lo, &self.hi)
    }

    fn intersect(&self, o: &Point3, d: &Vec3, t_max: f64) -> Option<Hit> {
        let r = self.radius;
        match self.shape {
            Shape::Sphere { c, clip } => {
                let oc = o - c;
                let b = oc.dot(d);
                let cc = oc.norm_squared() - r * r;
                if cc < 0.0 {
                    return None;
                }
                let disc = b * b - cc;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                let h = o + d * t;
                let inside = clip.iter().flatten().all(|(p, n)| (h - p).dot(n) >= 0.0);
                (inside && t > HIT_EPS && t < t_max).then_some(Hit {
                    t,
                    pipe: self.pipe,
                    record: true,
                })
            }
            Shape::Cylinder {
                a,
                axis,
                len,
                cap_start,
                cap_end,
            } => {
                let oc = o - a;
                let dz = d.dot(&axis);
                let ocz = oc.dot(&axis);
                let dp = d - axis * dz;
                let op = oc - axis * ocz;
                let mut best: Option<Hit> = None;
                let qa = dp.norm_squared();
                let qc = op.norm_squared() - r * r;
                if qa > 1e-18 && qc > 0.0 {
                    let qb = op.dot(&dp);
                    let disc = qb * qb - qa * qc;
                    if disc >= 0.0 {
                        let t = (-qb - disc.sqrt()) / qa;
                        let z = ocz + t * dz;
                        if t > HIT_EPS && t < t_max && (0.0..=len).contains(&z) {
                            best = Some(Hit {
                                t,
                                pipe: self.pipe,
                                record: true,
                            });
                        }
                    }
                }
                let mut try_cap = |t: f64| {
                    if t > HIT_EPS && t < best.map_or(t_max, |h| h.t) && (op + dp * t).norm_squared() <= r * r {
                        best = Some(Hit {
                            t,
                            pipe: self.pipe,
                            record: false,
                        });
                    }
                };
                if cap_start && dz > 0.0 && ocz < 0.0 {
                    try_cap(-ocz / dz);
                }
                if cap_end && dz < 0.0 && ocz > len {
                    try_cap((len - ocz) / dz);
                }
                best
            }
        }
    }
}

fn sphere_box(c: &Point3, r: f64) -> (Point3, Point3) {
    let e = Vec3::repeat(r);
    (c - e, c + e)
}

fn build_primitives(pipes: &[ScenePipe], spacing: f64) -> Result<Vec<Primitive>> {
    let mut prims = Vec::new();
    for (pi, pipe) in pipes.iter().enumerate() {
        let r = pipe.spec.outer_radius();
        let line = interpolate_spline(&pipe.spec, spacing)?;
        let pts = merge_collinear(line.points());
        let n = pts.len();
        for i in 0..n - 1 {
            let (a, b) = (pts[i], pts[i + 1]);
            let axis = (b - a).normalize();
            let (la, ha) = sphere_box(&a, r);
            let (lb, hb) = sphere_box(&b, r);
            prims.push(Primitive {
                shape: Shape::Cylinder {
                    a,
                    axis,
                    len: (b - a).norm(),
                    cap_start: i == 0,
                    cap_end: i == n - 2,
                },
                radius: r,
                pipe: pi as u32,
                lo: la.inf(&lb),
                hi: ha.sup(&hb),
            });
            if i > 0 {
                let (lo, hi) = sphere_box(&a, r);
                let near = |p: Point3, inward: Vec3| ((a - p).norm() < 2.0 * r).then_some((p, inward));
                let clip = [
                    near(pts[0], (pts[1] - pts[0]).normalize()),
                    near(pts[n - 1], (pts[n - 2] - pts[n - 1]).normalize()),
                ];
                prims.push(Primitive {
                    shape: Shape::Sphere { c: a, clip },
                    radius: r,
                    pipe: pi as u32,
                    lo,
                    hi,
                });
            }
        }
    }
    Ok(prims)
}

fn merge_collinear(pts: &[Point3]) -> Vec<Point3> {
    let mut out = vec![pts[0]];
    for i in 1..pts.len() - 1 {
        let prev = *out.last().unwrap();
        let d0 = (pts[i] - prev).normalize();
        let d1 = (pts[i + 1] - pts[i]).normalize();
        if d0.cross(&d1).norm() > 1e-12 || d0.dot(&d1) < 0.0 {
            out.push(pts[i]);
        }
    }
    out.push(pts[pts.len() - 1]);
    out
}

enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

struct Node {
    lo: Point3,
    hi: Point3,
    kind: NodeKind,
}

/// Median-split bounding volume hierarchy over primitives.
struct Bvh {
    nodes: Vec<Node>,
    prims: Vec<Primitive>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    fn new(mut prims: Vec<Primitive>) -> Self {
        let mut nodes = Vec::new();
        if !prims.is_empty() {
            let n = prims.len();
            Self::build(&mut nodes, &mut prims, 0, n);
        }
        Self { nodes, prims }
    }

    fn build(nodes: &mut Vec<Node>, prims: &mut [Primitive], start: usize, end: usize) -> usize {
        let slice = &mut prims[start..end];
        let mut lo = slice[0].lo;
        let mut hi = slice[0].hi;
        let mut clo = slice[0].centroid();
        let mut chi = clo;
        for p in slice.iter() {
            lo = lo.inf(&p.lo);
            hi = hi.sup(&p.hi);
            let c = p.centroid();
            clo = clo.inf(&c);
            chi = chi.sup(&c);
        }
        let id = nodes.len();
        nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf {
                start,
                count: end - start,
            },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let ext = chi - clo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (end - start) / 2;
        slice.select_nth_unstable_by(mid, |a, b| a.centroid()[axis].total_cmp(&b.centroid()[axis]));
        let left = Self::build(nodes, prims, start, start + mid);
        let right = Self::build(nodes, prims, start + mid, end);
        nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    fn slab(lo: &Point3, hi: &Point3, o: &Point3, inv: &Vec3, t_max: f64) -> bool {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut ta = (lo[a] - o[a]) * inv[a];
            let mut tb = (hi[a] - o[a]) * inv[a];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            // NaN from 0 * inf means the ray lies in the slab plane: keep it.
            if ta.is_nan() || tb.is_nan() {
                continue;
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }

    fn cast(&self, o: &Point3, d: &Vec3, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let limit = best.map_or(t_max, |h| h.t);
            if !Self::slab(&node.lo, &node.hi, o, &inv, limit) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for p in &self.prims[start..start + count] {
                        let limit = best.map_or(t_max, |h| h.t);
                        if let Some(h) = p.intersect(o, d, limit) {
                            best = Some(h);
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        best
    }
}

/// One-degree azimuth bins around `o` that may contain any primitive.
fn azimuth_mask(prims: &[Primitive], o: &Point3) -> Vec<bool> {
    let mut mask = vec![false; 360];
    for p in prims {
        if o.x >= p.lo.x && o.x <= p.hi.x && o.y >= p.lo.y && o.y <= p.hi.y {
            return vec![true; 360];
        }
        let corners = [
            (p.lo.x, p.lo.y),
            (p.lo.x, p.hi.y),
            (p.hi.x, p.lo.y),
            (p.hi.x, p.hi.y),
        ];
        let base = (corners[0].1 - o.y).atan2(corners[0].0 - o.x);
        let (mut amin, mut amax) = (0.0f64, 0.0f64);
        for c in &corners[1..] {
            let mut a = (c.1 - o.y).atan2(c.0 - o.x) - base;
            while a > std::f64::consts::PI {
                a -= 2.0 * std::f64::consts::PI;
            }
            while a < -std::f64::consts::PI {
                a += 2.0 * std::f64::consts::PI;
            }
            amin = amin.min(a);
            amax = amax.max(a);
        }
        let from = (base + amin).to_degrees().floor() as i64 - 1;
        let to = (base + amax).to_degrees().ceil() as i64 + 1;
        for deg in from..=to {
            mask[deg.rem_euclid(360) as usize] = true;
        }
    }
    mask
}

fn box_distance(lo: &Point3, hi: &Point3, p: &Point3) -> f64 {
    let mut d2 = 0.0;
    for a in 0..3 {
        let v = if p[a] < lo[a] {
            lo[a] - p[a]
        } else if p[a] > hi[a] {
            p[a] - hi[a]
        } else {
            0.0
        };
        d2 += v * v;
    }
    d2.sqrt()
}

/// Casts one ray per pixel of every yaw image of every station and returns
/// one labelled cloud per pipe, in scene order.
pub fn virtual_scan(
    pipes: &[ScenePipe],
    stations: &[ScanStation],
    opts: &ScanOptions,
) -> Result<(Vec<PointCloud>, ScanReport)> {
    if pipes.is_empty() {
        return Err(Error::InvalidInput("scene has no pipes".into()));
    }
    if stations.is_empty() {
        return Err(Error::InvalidInput("scene has no scan stations".into()));
    }
    let prims = build_primitives(pipes, opts.tube_spacing)?;
    let mut per_pipe: Vec<Vec<Point3>> = vec![Vec::new(); pipes.len()];
    let mut report = ScanReport::default();

    for st in stations {
        let local: Vec<Primitive> = prims
            .iter()
            .filter(|p| box_distance(&p.lo, &p.hi, &st.position) <= st.max_range)
            .copied()
            .collect();
        let images = st.image_count();
        if local.is_empty() {
            report.images_skipped += images as u64;
            continue;
        }
        let mask = azimuth_mask(&local, &st.position);
        let bvh = Bvh::new(local);
        let (th, tv) = st.half_fov_tangents();
        let half_h = th.atan().to_degrees();
        let [w, h] = st.resolution;

        let visible: Vec<usize> = (0..images)
            .filter(|&k| {
                let yaw = k as f64 * st.yaw_step_deg;
                let from = (yaw - half_h).floor() as i64 - 1;
                let to = (yaw + half_h).ceil() as i64 + 1;
                (from..=to).any(|deg| mask[deg.rem_euclid(360) as usize])
            })
            .collect();
        report.images_skipped += (images - visible.len()) as u64;
        report.rays_cast += (visible.len() * w * h) as u64;

        let hits: Vec<Vec<(u32, Point3)>> = visible
            .par_iter()
            .map(|&k| {
                let yaw = (k as f64 * st.yaw_step_deg).to_radians();
                let fwd = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
                let right = Vec3::new(yaw.sin(), -yaw.cos(), 0.0);
                let up = Vec3::z();
                let mut out = Vec::new();
                for j in 0..h {
                    let y = 1.0 - 2.0 * (j as f64 + 0.5) / h as f64;
                    for i in 0..w {
                        let x = 2.0 * (i as f64 + 0.5) / w as f64 - 1.0;
                        let d = (fwd + right * (x * th) + up * (y * tv)).normalize();
                        if let Some(hit) = bvh.cast(&st.position, &d, st.max_range) {
                            if hit.record {
                                out.push((hit.pipe, st.position + d * hit.t));
                            }
                        }
                    }
                }
                out
            })
            .collect();
        for image in hits {
            for (pipe, p) in image {
                per_pipe[pipe as usize].push(p);
            }
        }
    }

    if opts.jitter_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let normal = Normal::new(0.0, opts.jitter_sigma)
            .map_err(|e| Error::InvalidInput(format!("jitter: {e}")))?;
        for cloud in per_pipe.iter_mut() {
            for p in cloud.iter_mut() {
                *p += Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
    }

    report.hits_per_pipe = per_pipe.iter().map(Vec::len).collect();
    report.empty = per_pipe.iter().map(Vec::is_empty).collect();
    let clouds = per_pipe
        .into_iter()
        .zip(pipes)
        .map(|(pts, pipe)| PointCloud::new(pts, pipe.id.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((clouds, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::scene::PipeKind;
    use crate::synth::PipeSpec;

    fn pipe(id: &str, a: [f64; 3], b: [f64; 3], r: f64) -> ScenePipe {
        ScenePipe {
            id: id.into(),
            spec: PipeSpec::straight(Point3::from(a), Point3::from(b), r).unwrap(),
            kind: PipeKind::Straight,
        }
    }

    fn axis_distance_x(p: &Point3, y: f64, z: f64) -> f64 {
        ((p.y - y).powi(2) + (p.z - z).powi(2)).sqrt()
    }

    #[test]
    fn broadside_scan_sees_front_half_only() {
        let pipes = [pipe("p", [0.0, 0.0, 0.0], [2.0, 0.0, 0.0], 0.1)];
        let st = ScanStation::at(Point3::new(1.0, -2.0, 0.3));
        let (clouds, report) = virtual_scan(&pipes, std::slice::from_ref(&st), &ScanOptions::default()).unwrap();
        let cloud = &clouds[0];
        assert!(cloud.len() > 500, "{}", cloud.len());
        assert!(!report.empty[0]);
        for p in &cloud.points {
            assert!((axis_distance_x(p, 0.0, 0.0) - 0.1).abs() < 1e-6);
            let normal = Vec3::new(0.0, p.y, p.z).normalize();
            let ray = (p - st.position).normalize();
            assert!(normal.dot(&ray) <= 1e-9);
        }
    }

    #[test]
    fn opposite_stations_cover_circumference() {
        let pipes = [pipe("p", [0.0, 0.0, 0.0], [2.0, 0.0, 0.0], 0.1)];
        let stations = [
            ScanStation::at(Point3::new(1.0, -2.0, 0.3)),
            ScanStation::at(Point3::new(1.0, 2.0, -0.3)),
        ];
        let (clouds, _) = virtual_scan(&pipes, &stations, &ScanOptions::default()).unwrap();
        let mut bins = [false; 36];
        for p in clouds[0].points.iter().filter(|p| (p.x - 1.0).abs() < 0.1) {
            let a = p.z.atan2(p.y).to_degrees().rem_euclid(360.0);
            bins[(a / 10.0) as usize % 36] = true;
        }
        let covered = bins.iter().filter(|&&b| b).count() as f64 / 36.0;
        assert!(covered > 0.9, "coverage {covered}");
    }

    #[test]
    fn occluded_pipe_is_empty() {
        let pipes = [
            pipe("front", [-1.0, 1.0, 0.0], [1.0, 1.0, 0.0], 0.25),
            pipe("back", [-0.5, 3.0, 0.0], [0.5, 3.0, 0.0], 0.05),
        ];
        let (clouds, report) =
            virtual_scan(&pipes, &[ScanStation::at(Point3::origin())], &ScanOptions::default()).unwrap();
        assert!(!clouds[0].is_empty());
        assert!(clouds[1].is_empty());
        assert_eq!(report.empty, vec![false, true]);
    }

    #[test]
    fn more_stations_never_lose_points() {
        let pipes = [
            pipe("a", [0.0, 0.0, 0.0], [2.0, 0.0, 0.0], 0.1),
            pipe("b", [0.0, 1.0, 0.5], [2.0, 1.5, 0.5], 0.08),
        ];
        let s1 = ScanStation::at(Point3::new(1.0, -2.0, 0.0));
        let s2 = ScanStation::at(Point3::new(1.0, 3.0, 0.2));
        let (one, _) = virtual_scan(&pipes, std::slice::from_ref(&s1), &ScanOptions::default()).unwrap();
        let (two, _) = virtual_scan(&pipes, &[s1, s2], &ScanOptions::default()).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!(b.len() >= a.len());
        }
    }

    #[test]
    fn bend_points_satisfy_tube_equation() {
        let spec = PipeSpec::bend(
            Point3::new(0.0, 0.0, 0.0),
            Vec3::x(),
            Vec3::y(),
            0.4,
            0.5 * std::f64::consts::PI,
            0.06,
        )
        .unwrap();
        let pipes = [ScenePipe {
            id: "b".into(),
            spec: spec.clone(),
            kind: PipeKind::Bend,
        }];
        let opts = ScanOptions::default();
        let (clouds, _) =
            virtual_scan(&pipes, &[ScanStation::at(Point3::new(0.6, -1.5, 0.3))], &opts).unwrap();
        let line = interpolate_spline(&spec, opts.tube_spacing).unwrap();
        assert!(clouds[0].len() > 100);
        for p in &clouds[0].points {
            let d = crate::geometry::point_polyline_distance(p, line.points());
            assert!((d - 0.06).abs() < 1e-6, "{d}");
        }
    }

    #[test]
    fn station_validation() {
        assert!(ScanStation::new(Point3::origin(), 7.0, [256, 192], 60.0).is_err());
        assert!(ScanStation::new(Point3::origin(), 10.0, [1, 192], 60.0).is_err());
        assert!(ScanStation::new(Point3::origin(), 15.0, [2, 2], 60.0).is_ok());
    }
}
