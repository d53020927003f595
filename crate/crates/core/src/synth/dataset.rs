//! A synthetic stand-in for an industrial scan campaign: 51 pipes (15 bends,
//! 36 straight or multi-bend runs) with radii 0.06-0.25 m, each scanned from
//! stations on one side only.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scan::ScanStation;
use super::scene::{PipeKind, Scene, ScenePipe};
use super::PipeSpec;
use crate::error::Result;
use crate::geometry::{Point3, Vec3};

pub const DATASET_PIPES: usize = 51;
pub const DATASET_BENDS: usize = 15;
pub const RADIUS_RANGE: (f64, f64) = (0.06, 0.25);

/// Pipes are laid out in cells this far apart so that each station only
/// sees its own pipe within the default scanner range.
const CELL_SPACING: f64 = 60.0;

/// Incrementally builds a center line from straight runs and circular arcs.
#[derive(Debug, Clone)]
pub struct PathBuilder {
    points: Vec<Point3>,
    tangents: Vec<Vec3>,
    pos: Point3,
    dir: Vec3,
}

impl PathBuilder {
    pub fn new(start: Point3, dir: Vec3) -> Self {
        let dir = dir.normalize();
        Self {
            points: vec![start],
            tangents: vec![dir],
            pos: start,
            dir,
        }
    }

    pub fn straight(mut self, length: f64) -> Self {
        self.pos += self.dir * length;
        self.points.push(self.pos);
        self.tangents.push(self.dir);
        self
    }

    /// Turns toward `toward` on a circle of `bend_radius` by `angle` radians.
    pub fn arc(mut self, toward: Vec3, bend_radius: f64, angle: f64) -> Self {
        let t0 = self.dir;
        let n0 = (toward - t0 * toward.dot(&t0)).normalize();
        let center = self.pos + n0 * bend_radius;
        let pieces = ((angle / (0.5 * PI)).ceil() as usize).max(1);
        for i in 1..=pieces {
            let a = angle * i as f64 / pieces as f64;
            let p = center - n0 * (bend_radius * a.cos()) + t0 * (bend_radius * a.sin());
            let t = t0 * a.cos() + n0 * a.sin();
            self.points.push(p);
            self.tangents.push(t);
        }
        self.pos = *self.points.last().unwrap();
        self.dir = *self.tangents.last().unwrap();
        self
    }

    pub fn build(self, radius: f64) -> Result<PipeSpec> {
        PipeSpec::new(self.points, self.tangents, radius)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn make_bend(rng: &mut ChaCha8Rng, origin: Point3, radius: f64) -> Result<PipeSpec> {
    let angle = [0.5 * PI, 0.5 * PI, 0.5 * PI, PI / 3.0, PI / 4.0][rng.gen_range(0..5)];
    let arc_len = uniform(rng, 0.5, 1.5);
    let bend_radius = (arc_len / angle).max(2.5 * radius);
    // Either flat (turning away from the scanner) or standing in the view plane.
    let toward = if rng.gen_bool(0.5) { Vec3::y() } else { Vec3::z() };
    PathBuilder::new(origin, Vec3::x())
        .arc(toward, bend_radius, angle)
        .build(radius)
}

fn make_straight(rng: &mut ChaCha8Rng, origin: Point3, radius: f64) -> Result<PipeSpec> {
    let length = if rng.gen_bool(0.2) {
        uniform(rng, 6.0, 12.0)
    } else {
        uniform(rng, 0.5, 6.0)
    };
    let tilt = uniform(rng, -0.25, 0.25);
    let dir = Vec3::new(tilt.cos(), 0.0, tilt.sin());
    PipeSpec::straight(origin, origin + dir * length, radius)
}

fn make_complex(rng: &mut ChaCha8Rng, origin: Point3, radius: f64, long: bool) -> Result<PipeSpec> {
    let bend_r = uniform(rng, 3.0 * radius, 0.8_f64.max(3.0 * radius + 0.1));
    if long {
        return PathBuilder::new(origin, Vec3::x())
            .straight(uniform(rng, 8.0, 10.0))
            .arc(Vec3::y(), bend_r, 0.5 * PI)
            .straight(uniform(rng, 6.0, 10.0))
            .build(radius);
    }
    let leg = |rng: &mut ChaCha8Rng| uniform(rng, 0.8, 3.0);
    let mut path = PathBuilder::new(origin, Vec3::x()).straight(leg(rng));
    match rng.gen_range(0..3) {
        // L in the horizontal plane.
        0 => {
            path = path.arc(Vec3::y(), bend_r, 0.5 * PI).straight(leg(rng));
        }
        // S offset in the horizontal plane.
        1 => {
            path = path
                .arc(Vec3::y(), bend_r, 0.5 * PI)
                .straight(leg(rng) * 0.5)
                .arc(Vec3::x(), bend_r, 0.5 * PI)
                .straight(leg(rng));
        }
        // Riser: up and over.
        _ => {
            path = path
                .arc(Vec3::z(), bend_r, 0.5 * PI)
                .straight(leg(rng) * 0.5)
                .arc(Vec3::x(), bend_r, 0.5 * PI)
                .straight(leg(rng));
        }
    }
    path.build(radius)
}

/// Stations on the -y side of the pipe's bounding box, spread along x.
fn stations_for(spec: &PipeSpec, rng: &mut ChaCha8Rng) -> Vec<ScanStation> {
    let line = super::interpolate_spline(spec, 0.05).expect("valid spec");
    let (lo, hi) = crate::geometry::aabb(line.points()).expect("non-empty");
    let extent = hi.x - lo.x;
    let count = ((extent / 5.0).ceil() as usize).max(1);
    (0..count)
        .map(|i| {
            let x = lo.x + extent * (i as f64 + 0.5) / count as f64 + uniform(rng, -0.3, 0.3);
            let y = lo.y - spec.outer_radius() - uniform(rng, 1.5, 3.0);
            let z = 0.5 * (lo.z + hi.z) + uniform(rng, -0.6, 0.6);
            ScanStation::at(Point3::new(x, y, z))
        })
        .collect()
}

/// The 51-pipe dataset. Deterministic in `seed`.
pub fn paper_shaped_scene(seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pipes = Vec::with_capacity(DATASET_PIPES);
    let mut stations = Vec::new();
    for i in 0..DATASET_PIPES {
        let origin = Point3::new(CELL_SPACING * i as f64, 0.0, 2.0);
        let radius = uniform(&mut rng, RADIUS_RANGE.0, RADIUS_RANGE.1);
        let (kind, spec) = if i < DATASET_BENDS {
            (PipeKind::Bend, make_bend(&mut rng, origin, radius)?)
        } else if i < DATASET_BENDS + 22 {
            (PipeKind::Straight, make_straight(&mut rng, origin, radius)?)
        } else {
            let long = i == DATASET_PIPES - 1;
            (PipeKind::Complex, make_complex(&mut rng, origin, radius, long)?)
        };
        stations.extend(stations_for(&spec, &mut rng));
        pipes.push(ScenePipe {
            id: format!("pipe_{i:02}"),
            spec,
            kind,
        });
    }
    Ok(Scene {
        pipes,
        stations,
        jitter_sigma: 0.0,
    })
}
