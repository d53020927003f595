//! Voxelised curve and its chamfer distance field, stored sparsely in a band
//! around the curve.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geometry::{aabb, GridSpec, Point3, Polyline, Vec3};

/// Largest grid accepted, in cells. For distance fields this bounds the
/// estimated band size rather than the bounding box.
pub const MAX_GRID_CELLS: u128 = 1_000_000_000;

/// Default half-width of the distance band, in voxels.
pub const DEFAULT_BAND: usize = 8;

type Key = [i64; 3];

/// Distance to the voxelised curve, known exactly (up to the chamfer metric)
/// inside a band; outside it the band limit is returned.
#[derive(Debug, Clone)]
pub struct DistanceField {
    /// Bounding grid of the band; cell `(i, j, k)` of `spec` is key
    /// `offset + (i, j, k)`.
    pub spec: GridSpec,
    offset: Key,
    voxel: f64,
    limit: f64,
    occupied: HashSet<Key>,
    dist: HashMap<Key, f64>,
}

impl DistanceField {
    pub fn voxel_size(&self) -> f64 {
        self.voxel
    }

    /// Distance returned outside the band.
    pub fn limit(&self) -> f64 {
        self.limit
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_occupied(&self, p: &Point3) -> bool {
        self.occupied.contains(&key_of(p, self.voxel))
    }

    /// Occupied cells as grid indices of `spec`, sorted.
    pub fn occupied_cells(&self) -> Vec<[usize; 3]> {
        let mut v: Vec<[usize; 3]> = self
            .occupied
            .iter()
            .map(|k| std::array::from_fn(|a| (k[a] - self.offset[a]) as usize))
            .collect();
        v.sort_unstable();
        v
    }

    /// Stored distance of the cell containing `p`.
    pub fn cell_distance(&self, p: &Point3) -> f64 {
        self.at(&key_of(p, self.voxel))
    }

    fn at(&self, k: &Key) -> f64 {
        self.dist.get(k).copied().unwrap_or(self.limit)
    }

    /// Trilinear interpolation between cell centres.
    pub fn sample(&self, p: &Point3) -> f64 {
        let u = p.coords / self.voxel - Vec3::repeat(0.5);
        let base = u.map(f64::floor);
        let f = u - base;
        let b = [base.x as i64, base.y as i64, base.z as i64];
        let mut acc = 0.0;
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let w = (if dx == 1 { f.x } else { 1.0 - f.x })
                        * (if dy == 1 { f.y } else { 1.0 - f.y })
                        * (if dz == 1 { f.z } else { 1.0 - f.z });
                    if w != 0.0 {
                        acc += w * self.at(&[b[0] + dx, b[1] + dy, b[2] + dz]);
                    }
                }
            }
        }
        acc
    }

    /// Central differences of the interpolated field, one voxel apart.
    pub fn gradient(&self, p: &Point3) -> Vec3 {
        let h = self.voxel;
        let mut g = Vec3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            g[a] = (self.sample(&(p + e)) - self.sample(&(p - e))) / (2.0 * h);
        }
        g
    }
}

fn key_of(p: &Point3, h: f64) -> Key {
    [(p.x / h).floor() as i64, (p.y / h).floor() as i64, (p.z / h).floor() as i64]
}

/// Cells crossed by segment `a`-`b` (3D DDA), in traversal order.
fn traverse(a: &Point3, b: &Point3, h: f64, out: &mut Vec<Key>) {
    let mut cell = key_of(a, h);
    let end = key_of(b, h);
    out.push(cell);
    let d = b - a;
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for ax in 0..3 {
        if d[ax] > 0.0 {
            step[ax] = 1;
            t_max[ax] = (((cell[ax] + 1) as f64) * h - a[ax]) / d[ax];
            t_delta[ax] = h / d[ax];
        } else if d[ax] < 0.0 {
            step[ax] = -1;
            t_max[ax] = ((cell[ax] as f64) * h - a[ax]) / d[ax];
            t_delta[ax] = -h / d[ax];
        }
    }
    let budget: i64 = (0..3).map(|ax| (end[ax] - cell[ax]).abs()).sum();
    for _ in 0..budget {
        if cell == end {
            break;
        }
        let ax = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[ax] > 1.0 {
            break;
        }
        cell[ax] += step[ax];
        t_max[ax] += t_delta[ax];
        out.push(cell);
    }
    if cell != end {
        out.push(end);
    }
}

#[derive(PartialEq)]
struct Item(f64, Key);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Marks every voxel crossed by the curve and propagates distances from
/// them Dijkstra-style over the 26-neighbourhood with Euclidean step costs,
/// up to `band` voxels away.
pub fn voxelize_curve(curve: &Polyline, voxel_size: f64) -> Result<DistanceField> {
    voxelize_curve_band(curve, voxel_size, DEFAULT_BAND)
}

pub fn voxelize_curve_band(curve: &Polyline, voxel_size: f64, band: usize) -> Result<DistanceField> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidInput(format!("voxel_size must be positive, got {voxel_size}")));
    }
    let h = voxel_size;
    let pad = band as i64 + 1;
    let (lo, hi) = aabb(curve.points()).expect("polyline has points");
    let klo = key_of(&lo, h).map(|v| v - pad);
    let khi = key_of(&hi, h).map(|v| v + pad);
    let dims: [u128; 3] = std::array::from_fn(|a| (khi[a] - klo[a] + 1) as u128);
    // Each voxel step along the curve adds at most one band cross-section.
    let side = 2 * band as u128 + 1;
    let steps = (curve.length() / h).ceil() as u128 + curve.len() as u128;
    let cells = steps.saturating_mul(side * side);
    if cells > MAX_GRID_CELLS {
        return Err(Error::GridTooLarge(cells));
    }

    let mut seeds = Vec::new();
    for w in curve.points().windows(2) {
        traverse(&w[0], &w[1], h, &mut seeds);
    }
    let occupied: HashSet<Key> = seeds.iter().copied().collect();
    let limit = band as f64 * h;
    let mut dist: HashMap<Key, f64> = HashMap::with_capacity(occupied.len() * (2 * band + 1).pow(2));
    let mut heap = BinaryHeap::new();
    let mut sorted: Vec<Key> = occupied.iter().copied().collect();
    sorted.sort_unstable();
    for k in sorted {
        dist.insert(k, 0.0);
        heap.push(Item(0.0, k));
    }
    let mut offsets = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    let len = ((dx * dx + dy * dy + dz * dz) as f64).sqrt() * h;
                    offsets.push(([dx, dy, dz], len));
                }
            }
        }
    }
    while let Some(Item(d, k)) = heap.pop() {
        if d > dist[&k] {
            continue;
        }
        for (o, len) in &offsets {
            let nd = d + len;
            if nd > limit {
                continue;
            }
            let nk = [k[0] + o[0], k[1] + o[1], k[2] + o[2]];
            if dist.get(&nk).is_none_or(|&old| nd < old) {
                dist.insert(nk, nd);
                heap.push(Item(nd, nk));
            }
        }
    }
    let spec = GridSpec {
        origin: Point3::new(klo[0] as f64 * h, klo[1] as f64 * h, klo[2] as f64 * h),
        voxel_size: h,
        dims: dims.map(|d| d as usize),
    };
    Ok(DistanceField {
        spec,
        offset: klo,
        voxel: h,
        limit,
        occupied,
        dist,
    })
}
