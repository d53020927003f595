//! Cotangent Laplacian on point clouds from local tangent-plane fans.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Vec3};
use crate::spatial::PointIndex;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

/// Fan triangles `(i, a, b)` around every point, stored per point as `[a, b]`.
#[derive(Debug, Clone)]
pub struct OneRings {
    pub fans: Vec<Vec<[usize; 2]>>,
}

/// Builds one-ring fans from each point's `k` nearest neighbours projected to
/// the local PCA tangent plane. The fan is the point's star in the planar
/// Delaunay triangulation of that neighbourhood, read off the Voronoi cell.
pub fn build_one_rings(points: &[Point3], k: usize) -> OneRings {
    let index = PointIndex::new(points);
    let want = k.min(points.len().saturating_sub(1));
    if want < k {
        log::warn!(
            "only {} neighbours available for k = {k}; using k = {want}",
            want
        );
    }
    let fans = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let p = points[i];
            let neigh: Vec<usize> = index
                .knn(&p, want + 1)
                .into_iter()
                .filter(|&(j, d)| j != i && d > 1e-12)
                .map(|(j, _)| j)
                .take(want)
                .collect();
            if neigh.len() < 2 {
                return Vec::new();
            }
            let normal = pca_normal(&p, neigh.iter().map(|&j| &points[j]));
            let e1 = crate::synth::any_perpendicular(&normal);
            let e2 = normal.cross(&e1);
            let planar: Vec<(usize, [f64; 2])> = neigh
                .iter()
                .map(|&j| {
                    let d = points[j] - p;
                    (j, [d.dot(&e1), d.dot(&e2)])
                })
                .collect();
            delaunay_fan(&planar)
        })
        .collect();
    OneRings { fans }
}

/// Star of the origin in the Delaunay triangulation of `{0} ∪ neighbours`.
///
/// Clips a large box by the bisector of every neighbour; bisectors that
/// survive as cell edges are Delaunay neighbours, and two such edges meeting
/// at a cell vertex span a triangle. Edges left over from the box mark an
/// open boundary, across which no triangle is formed.
fn delaunay_fan(neigh: &[(usize, [f64; 2])]) -> Vec<[usize; 2]> {
    let reach = neigh
        .iter()
        .map(|(_, q)| q[0].abs().max(q[1].abs()))
        .fold(0.0, f64::max);
    if reach == 0.0 {
        return Vec::new();
    }
    let b = 64.0 * reach;
    // Vertices with the label of the edge leaving them (None = box edge).
    let mut poly: Vec<([f64; 2], Option<usize>)> =
        vec![([-b, -b], None), ([b, -b], None), ([b, b], None), ([-b, b], None)];
    for &(j, q) in neigh {
        let c = 0.5 * (q[0] * q[0] + q[1] * q[1]);
        if c <= 0.0 {
            continue;
        }
        let side = |v: &[f64; 2]| v[0] * q[0] + v[1] * q[1] - c;
        let m = poly.len();
        let mut next = Vec::with_capacity(m + 1);
        for s in 0..m {
            let (u, lab) = poly[s];
            let (v, _) = poly[(s + 1) % m];
            let (su, sv) = (side(&u), side(&v));
            if su <= 0.0 {
                next.push((u, lab));
                if sv > 0.0 {
                    let t = su / (su - sv);
                    next.push(([u[0] + t * (v[0] - u[0]), u[1] + t * (v[1] - u[1])], Some(j)));
                }
            } else if sv <= 0.0 {
                let t = su / (su - sv);
                next.push(([u[0] + t * (v[0] - u[0]), u[1] + t * (v[1] - u[1])], lab));
            }
        }
        poly = next;
        if poly.len() < 3 {
            return Vec::new();
        }
    }
    let labels: Vec<Option<usize>> = poly.iter().map(|e| e.1).collect();
    let m = labels.len();
    let mut fan = Vec::new();
    for s in 0..m {
        if let (Some(a), Some(c)) = (labels[s], labels[(s + 1) % m]) {
            if a != c {
                fan.push([a, c]);
            }
        }
    }
    fan
}

fn pca_normal<'a>(center: &Point3, neigh: impl Iterator<Item = &'a Point3>) -> Vec3 {
    let pts: Vec<Vec3> = std::iter::once(center.coords).chain(neigh.map(|q| q.coords)).collect();
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let mut cov = Matrix3::zeros();
    for q in &pts {
        let d = q - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut imin = 0;
    for a in 1..3 {
        if eig.eigenvalues[a] < eig.eigenvalues[imin] {
            imin = a;
        }
    }
    let n = eig.eigenvectors.column(imin).into_owned();
    if n.norm() > 0.0 {
        n.normalize()
    } else {
        Vec3::z()
    }
}

/// Cotangent of the angle at `apex` in triangle `(apex, u, v)`, clamped to
/// `[-max, max]`. Exactly degenerate corners contribute nothing.
fn cot_at(apex: &Point3, u: &Point3, v: &Point3, max: f64) -> f64 {
    let a = u - apex;
    let b = v - apex;
    let cross = a.cross(&b).norm();
    let dot = a.dot(&b);
    if cross <= 1e-14 * a.norm() * b.norm() || cross == 0.0 {
        return 0.0;
    }
    (dot / cross).clamp(-max, max)
}

/// Total fan area per point.
pub fn one_ring_areas(points: &[Point3], rings: &OneRings) -> Vec<f64> {
    rings
        .fans
        .iter()
        .enumerate()
        .map(|(i, fan)| {
            fan.iter()
                .map(|&[a, b]| 0.5 * (points[a] - points[i]).cross(&(points[b] - points[i])).norm())
                .sum()
        })
        .collect()
}

/// Symmetric cotangent Laplacian for the given fans evaluated at `points`.
/// Off-diagonal `L_ij = (w_ij + w_ji) / 2` with `w_ij` the half-sum of
/// cotangents opposite edge `ij` in `i`'s fan; the diagonal makes every row
/// sum to zero.
pub fn cotangent_laplacian(points: &[Point3], rings: &OneRings, max_cot: f64) -> CsrMatrix {
    let n = points.len();
    let half: Vec<Vec<(usize, f64)>> = rings
        .fans
        .par_iter()
        .enumerate()
        .map(|(i, fan)| {
            let mut w: Vec<(usize, f64)> = Vec::with_capacity(2 * fan.len());
            for &[a, b] in fan {
                let pi = &points[i];
                let (pa, pb) = (&points[a], &points[b]);
                // Angle at b is opposite edge (i, a); angle at a is opposite (i, b).
                w.push((a, 0.5 * cot_at(pb, pi, pa, max_cot)));
                w.push((b, 0.5 * cot_at(pa, pi, pb, max_cot)));
            }
            w.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(w.len());
            for (j, v) in w {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            merged
        })
        .collect();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in half.iter().enumerate() {
        for &(j, w) in list {
            let w = w.clamp(0.0, max_cot);
            rows[i].push((j, 0.5 * w));
            rows[j].push((i, 0.5 * w));
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for (i, mut row) in rows.into_iter().enumerate() {
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len() + 1);
        for (j, v) in row {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        let diag: f64 = -merged.iter().map(|e| e.1).sum::<f64>();
        let pos = merged.partition_point(|e| e.0 < i);
        merged.insert(pos, (i, diag));
        for (j, v) in merged {
            col_idx.push(j);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix {
        n,
        row_ptr,
        col_idx,
        values,
    }
}

/// Cotangent Laplacian of a cloud with `k`-neighbour fans and the default
/// cotangent clamp.
pub fn build_laplacian(cloud: &PointCloud, k: usize) -> Result<CsrMatrix> {
    if cloud.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    if k < 2 {
        return Err(Error::InvalidInput(format!("neighbourhood size {k} too small")));
    }
    let rings = build_one_rings(&cloud.points, k);
    Ok(cotangent_laplacian(&cloud.points, &rings, super::DEFAULT_MAX_COT))
}
