//! Final pipe model and its hull mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PipeModel, Point3, Polyline, TriMesh, Vec3};
use crate::refine::mean_radius;
use crate::synth::any_perpendicular;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HullParams {
    pub circumferential_segments: usize,
    pub cap_ends: bool,
}

impl Default for HullParams {
    fn default() -> Self {
        Self {
            circumferential_segments: 32,
            cap_ends: true,
        }
    }
}

/// Model with tangents, mean radius and axis length derived from `spline`.
pub fn assemble_model(spline: Polyline, radii: &[f64]) -> Result<PipeModel> {
    PipeModel::new(spline, mean_radius(radii)?)
}

/// Ring frames along the spline by the double-reflection rotation-minimising
/// method. Returns one `(u, v)` pair per spline point, both normal to the
/// tangent.
fn ring_frames(points: &[Point3], tangents: &[Vec3]) -> Vec<(Vec3, Vec3)> {
    let mut frames = Vec::with_capacity(points.len());
    let u0 = any_perpendicular(&tangents[0]);
    frames.push((u0, tangents[0].cross(&u0)));
    for i in 0..points.len() - 1 {
        let (u, _) = frames[i];
        let v1 = points[i + 1] - points[i];
        let c1 = v1.dot(&v1);
        let u_l = u - v1 * (2.0 / c1 * v1.dot(&u));
        let t_l = tangents[i] - v1 * (2.0 / c1 * v1.dot(&tangents[i]));
        let v2 = tangents[i + 1] - t_l;
        let c2 = v2.dot(&v2);
        let mut un = if c2 > 1e-24 { u_l - v2 * (2.0 / c2 * v2.dot(&u_l)) } else { u_l };
        // Remove drift so the frame stays orthonormal.
        un = (un - tangents[i + 1] * un.dot(&tangents[i + 1])).normalize();
        frames.push((un, tangents[i + 1].cross(&un)));
    }
    frames
}

/// Extrudes a circle of the model's mean radius along its spline. Rings are
/// normal to the local tangent; consecutive rings are stitched into
/// triangles, and optional fan caps close the tube. Triangles face outward.
pub fn extrude_hull(model: &PipeModel, params: &HullParams) -> Result<TriMesh> {
    let s = params.circumferential_segments;
    if s < 8 {
        return Err(Error::InvalidInput(format!("circumferential_segments must be >= 8, got {s}")));
    }
    let pts = model.spline.points();
    let tangents = &model.tangents;
    for i in 0..tangents.len() - 1 {
        if tangents[i].dot(&tangents[i + 1]) < -1.0 + 1e-6 {
            return Err(Error::Cusp(i + 1));
        }
    }
    let r = model.mean_radius;
    let frames = ring_frames(pts, tangents);
    let mut mesh = TriMesh::default();
    for (p, (u, v)) in pts.iter().zip(&frames) {
        for k in 0..s {
            let a = k as f64 / s as f64 * std::f64::consts::TAU;
            mesh.vertices.push(p + (u * a.cos() + v * a.sin()) * r);
        }
    }
    // (u, v, t) is right-handed, so counter-clockwise rings viewed along
    // +t need (a, b, b') ordering for outward normals.
    for i in 0..pts.len() - 1 {
        let (ra, rb) = (i * s, (i + 1) * s);
        for k in 0..s {
            let k1 = (k + 1) % s;
            mesh.triangles.push([ra + k, ra + k1, rb + k1]);
            mesh.triangles.push([ra + k, rb + k1, rb + k]);
        }
    }
    if params.cap_ends {
        let first = mesh.vertices.len();
        mesh.vertices.push(pts[0]);
        let last = first + 1;
        mesh.vertices.push(pts[pts.len() - 1]);
        let re = (pts.len() - 1) * s;
        for k in 0..s {
            let k1 = (k + 1) % s;
            mesh.triangles.push([first, k1, k]);
            mesh.triangles.push([last, re + k, re + k1]);
        }
    }
    Ok(mesh)
}
