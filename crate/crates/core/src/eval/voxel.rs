//! Solid voxelisation of closed meshes inside an evaluation box, and IoU.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Point3, PointCloud, TriMesh, Vec3, VoxelGrid};

/// Axis-aligned evaluation box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleBounds {
    pub min: Point3,
    pub max: Point3,
}

impl VisibleBounds {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if (0..3).all(|a| min[a] < max[a]) {
            Ok(Self { min, max })
        } else {
            Err(Error::InvalidInput(format!("empty bounds {min:?} .. {max:?}")))
        }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn expanded(&self, margin: f64) -> Self {
        let m = Vec3::repeat(margin);
        Self {
            min: self.min - m,
            max: self.max + m,
        }
    }

    /// Grid of `voxel_size` cells anchored at `min` and covering the box.
    pub fn grid(&self, voxel_size: f64) -> Result<GridSpec> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidInput(format!("voxel_size must be positive, got {voxel_size}")));
        }
        let dims: [usize; 3] = std::array::from_fn(|a| (((self.max[a] - self.min[a]) / voxel_size).ceil() as usize).max(1));
        let cells = dims.iter().map(|&d| d as u128).product::<u128>();
        if cells > crate::smooth::field::MAX_GRID_CELLS {
            return Err(Error::GridTooLarge(cells));
        }
        Ok(GridSpec {
            origin: self.min,
            voxel_size,
            dims,
        })
    }
}

/// Bounding box of the cloud grown by `margin` on every side.
pub fn visible_bounds(cloud: &PointCloud, margin: f64) -> Result<VisibleBounds> {
    let (lo, hi) = cloud.aabb().ok_or(Error::Empty("cloud"))?;
    if !(margin >= 0.0) {
        return Err(Error::InvalidInput(format!("margin must be non-negative, got {margin}")));
    }
    let b = VisibleBounds { min: lo, max: hi }.expanded(margin);
    VisibleBounds::new(b.min, b.max)
}

/// Whether an edge of a counter-clockwise triangle owns points lying exactly
/// on it, so that shared edges are counted once.
fn owns_edge(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dy, dz) = (b.0 - a.0, b.1 - a.1);
    (dz == 0.0 && dy < 0.0) || dz > 0.0
}

/// x coordinate where the +x ray through `(y, z)` crosses the triangle.
fn ray_hit(tri: &[Point3; 3], y: f64, z: f64) -> Option<f64> {
    let mut p: [(f64, f64); 3] = std::array::from_fn(|i| (tri[i].y, tri[i].z));
    let mut q = *tri;
    let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    if area == 0.0 {
        return None;
    }
    if area < 0.0 {
        p.swap(1, 2);
        q.swap(1, 2);
    }
    let mut w = [0.0; 3];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        let e = (b.0 - a.0) * (z - a.1) - (b.1 - a.1) * (y - a.0);
        if e < 0.0 || (e == 0.0 && !owns_edge(a, b)) {
            return None;
        }
        w[i] = e;
    }
    let s = w[0] + w[1] + w[2];
    Some((w[0] * q[0].x + w[1] * q[1].x + w[2] * q[2].x) / s)
}

/// Marks cells whose centre is inside the closed mesh (ray parity along +x)
/// and inside `bounds`. The grid is `bounds.grid(voxel_size)`.
pub fn voxelize_solid(mesh: &TriMesh, bounds: &VisibleBounds, voxel_size: f64) -> Result<VoxelGrid> {
    if !mesh.is_watertight() {
        return Err(Error::OpenMesh);
    }
    let spec = bounds.grid(voxel_size)?;
    let [nx, ny, nz] = spec.dims;
    let h = voxel_size;
    // Bin triangles by the (j, k) rows their yz footprint covers.
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); ny * nz];
    let tris: Vec<[Point3; 3]> = mesh.triangles.iter().map(|t| t.map(|i| mesh.vertices[i])).collect();
    for (ti, t) in tris.iter().enumerate() {
        let (ylo, yhi) = (t.iter().map(|p| p.y).fold(f64::MAX, f64::min), t.iter().map(|p| p.y).fold(f64::MIN, f64::max));
        let (zlo, zhi) = (t.iter().map(|p| p.z).fold(f64::MAX, f64::min), t.iter().map(|p| p.z).fold(f64::MIN, f64::max));
        let j0 = ((ylo - spec.origin.y) / h - 0.5).ceil().max(0.0) as usize;
        let j1 = ((yhi - spec.origin.y) / h - 0.5).floor();
        let k0 = ((zlo - spec.origin.z) / h - 0.5).ceil().max(0.0) as usize;
        let k1 = ((zhi - spec.origin.z) / h - 0.5).floor();
        if j1 < 0.0 || k1 < 0.0 {
            continue;
        }
        let (j1, k1) = ((j1 as usize).min(ny - 1), (k1 as usize).min(nz - 1));
        for k in k0..=k1 {
            for j in j0..=j1 {
                rows[k * ny + j].push(ti as u32);
            }
        }
    }
    let slabs: Vec<Vec<bool>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut slab = vec![false; nx * ny];
            let mut xs = Vec::new();
            for j in 0..ny {
                let c = spec.center(0, j, k);
                xs.clear();
                xs.extend(rows[k * ny + j].iter().filter_map(|&t| ray_hit(&tris[t as usize], c.y, c.z)));
                if xs.len() < 2 {
                    continue;
                }
                xs.sort_by(f64::total_cmp);
                for pair in xs.chunks_exact(2) {
                    let i0 = ((pair[0] - spec.origin.x) / h - 0.5).ceil().max(0.0) as usize;
                    let i1 = ((pair[1] - spec.origin.x) / h - 0.5).floor();
                    if i1 < 0.0 {
                        continue;
                    }
                    for i in i0..=(i1 as usize).min(nx - 1) {
                        slab[j * nx + i] = true;
                    }
                }
            }
            slab
        })
        .collect();
    let mut grid = VoxelGrid::empty(spec);
    for (k, slab) in slabs.into_iter().enumerate() {
        for (jj, &v) in slab.iter().enumerate() {
            if v {
                let (i, j) = (jj % nx, jj / nx);
                if bounds.contains(&spec.center(i, j, k)) {
                    let idx = spec.index(i, j, k);
                    grid.occupancy[idx] = true;
                }
            }
        }
    }
    Ok(grid)
}

/// Intersection over union of two grids on the same lattice. An empty union
/// gives 0.
pub fn iou(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if a.spec != b.spec || a.occupancy.len() != b.occupancy.len() {
        return Err(Error::GridMismatch);
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupancy.iter().zip(&b.occupancy) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        log::warn!("IoU of two empty grids; reporting 0");
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PipeModel, Polyline};
    use crate::recon::{extrude_hull, HullParams};
    use std::f64::consts::PI;

    fn cylinder_mesh(r: f64, len: f64, offset: Vec3) -> TriMesh {
        let spline = Polyline::new(vec![Point3::origin() + offset, Point3::new(len, 0.0, 0.0) + offset]).unwrap();
        let m = PipeModel::new(spline, r).unwrap();
        extrude_hull(&m, &HullParams { circumferential_segments: 128, cap_ends: true }).unwrap()
    }

    fn bounds(lo: [f64; 3], hi: [f64; 3]) -> VisibleBounds {
        VisibleBounds::new(Point3::from(lo), Point3::from(hi)).unwrap()
    }

    #[test]
    fn bounds_of_points() {
        let cube: Vec<Point3> = (0..8).map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)).collect();
        let b = visible_bounds(&PointCloud::new(cube, "c").unwrap(), 0.0).unwrap();
        assert_eq!((b.min, b.max), (Point3::origin(), Point3::new(1.0, 1.0, 1.0)));
        let one = visible_bounds(&PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)], "p").unwrap(), 0.1).unwrap();
        assert!((one.max - one.min - Vec3::repeat(0.2)).norm() < 1e-12);
        assert!((nalgebra::center(&one.min, &one.max) - Point3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn cylinder_volume() {
        let mesh = cylinder_mesh(0.1, 1.0, Vec3::zeros());
        let b = bounds([-0.1, -0.15, -0.15], [1.1, 0.15, 0.15]);
        let g = voxelize_solid(&mesh, &b, 0.005).unwrap();
        let exact = PI * 0.01;
        assert!((g.occupied_volume() - exact).abs() < 0.02 * exact, "{}", g.occupied_volume());
    }

    #[test]
    fn clipped_cylinder_is_half() {
        let mesh = cylinder_mesh(0.1, 1.0, Vec3::zeros());
        let g = voxelize_solid(&mesh, &bounds([-0.1, -0.15, -0.15], [0.5, 0.15, 0.15]), 0.005).unwrap();
        let half = PI * 0.01 * 0.5;
        assert!((g.occupied_volume() - half).abs() < 0.02 * half, "{}", g.occupied_volume());
    }

    #[test]
    fn disjoint_bounds_are_empty() {
        let mesh = cylinder_mesh(0.1, 1.0, Vec3::zeros());
        let g = voxelize_solid(&mesh, &bounds([2.0, 2.0, 2.0], [2.5, 2.5, 2.5]), 0.01).unwrap();
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn open_mesh_is_refused() {
        let spline = Polyline::new(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]).unwrap();
        let m = PipeModel::new(spline, 0.1).unwrap();
        let open = extrude_hull(&m, &HullParams { circumferential_segments: 16, cap_ends: false }).unwrap();
        let err = voxelize_solid(&open, &bounds([0.0; 3], [1.0; 3]), 0.01).unwrap_err();
        assert_eq!(err.to_string(), "open mesh cannot be voxelized as solid");
    }

    #[test]
    fn iou_basics() {
        let b = bounds([-0.3, -0.3, -0.3], [1.3, 0.3, 0.3]);
        let a = voxelize_solid(&cylinder_mesh(0.2, 1.0, Vec3::zeros()), &b, 0.005).unwrap();
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let inner = voxelize_solid(&cylinder_mesh(0.1, 1.0, Vec3::zeros()), &b, 0.005).unwrap();
        let v = iou(&a, &inner).unwrap();
        assert!((v - 0.25).abs() < 0.02 * 0.25, "{v}");
        assert_eq!(iou(&a, &inner).unwrap(), iou(&inner, &a).unwrap());
        let far = voxelize_solid(&cylinder_mesh(0.05, 0.2, Vec3::new(0.0, 0.22, 0.0)), &b, 0.005).unwrap();
        let tiny = voxelize_solid(&cylinder_mesh(0.05, 0.2, Vec3::new(0.5, -0.22, 0.0)), &b, 0.005).unwrap();
        assert_eq!(iou(&far, &tiny).unwrap(), 0.0);
        let other = voxelize_solid(&cylinder_mesh(0.1, 1.0, Vec3::zeros()), &b.expanded(0.01), 0.005).unwrap();
        assert!(iou(&a, &other).is_err());
        let empty = VoxelGrid::empty(a.spec);
        assert_eq!(iou(&empty, &empty).unwrap(), 0.0);
    }
}
