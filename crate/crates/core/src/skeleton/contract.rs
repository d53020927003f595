//! Iterative Laplacian contraction of a point cloud toward its curve skeleton.

use serde::{Deserialize, Serialize};
use sprs::{CsMat, FillInReduction, SymmetryCheck, TriMat};
use sprs_ldl::Ldl;

use super::laplacian::{build_one_rings, cotangent_laplacian, one_ring_areas, CsrMatrix};
use crate::error::{Error, Result};
use crate::geometry::{aabb, aabb_volume, Point3, PointCloud, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionParams {
    /// Initial contraction weight, divided by the square root of the mean
    /// one-ring area of the cloud normalized to a unit bounding box.
    pub init_contraction_weight: f64,
    pub init_attraction_weight: f64,
    pub contraction_amplification: f64,
    pub max_contraction_weight: f64,
    pub max_attraction_weight: f64,
    pub max_iterations: usize,
    pub neighborhood_size: usize,
    /// Stop once an iteration keeps more than this fraction of the previous
    /// bounding-box volume.
    pub convergence_ratio: f64,
    /// Stop once the mean one-ring area falls below this fraction of its
    /// initial value. Guards against the axial collapse of an already thin
    /// skeleton.
    pub termination_area_ratio: f64,
    pub max_cot: f64,
    /// An iteration that shrinks the spread along the principal direction by
    /// more than this fraction is rejected: contraction should thin the
    /// cloud, not shorten it.
    pub max_spread_loss: f64,
}

impl Default for ContractionParams {
    fn default() -> Self {
        Self {
            init_contraction_weight: 0.2,
            init_attraction_weight: 1.0,
            contraction_amplification: 3.0,
            max_contraction_weight: 2048.0,
            max_attraction_weight: 1.0e4,
            max_iterations: 20,
            neighborhood_size: 16,
            convergence_ratio: 0.9,
            termination_area_ratio: 0.01,
            max_cot: super::DEFAULT_MAX_COT,
            max_spread_loss: 0.1,
        }
    }
}

impl ContractionParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("init_contraction_weight", self.init_contraction_weight),
            ("init_attraction_weight", self.init_attraction_weight),
            ("contraction_amplification", self.contraction_amplification),
            ("max_contraction_weight", self.max_contraction_weight),
            ("max_attraction_weight", self.max_attraction_weight),
            ("convergence_ratio", self.convergence_ratio),
            ("max_cot", self.max_cot),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.max_spread_loss > 0.0 && self.max_spread_loss < 1.0) {
            return Err(Error::InvalidInput("max_spread_loss must lie in (0, 1)".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidInput("max_iterations must be >= 1".into()));
        }
        if self.neighborhood_size < 4 {
            return Err(Error::InvalidInput("neighborhood_size must be >= 4".into()));
        }
        if !(0.0..1.0).contains(&self.termination_area_ratio) {
            return Err(Error::InvalidInput("termination_area_ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractedCloud {
    /// Same order and cardinality as the input cloud.
    pub points: Vec<Point3>,
    pub iterations_used: usize,
    /// Bounding-box volume before the first and after every iteration.
    pub volume_history: Vec<f64>,
    /// One-ring neighbours of every point in the input cloud, sorted.
    pub neighbors: Vec<Vec<usize>>,
}

pub const MIN_CONTRACTION_POINTS: usize = 10;

const STARTED_AREA_RATIO: f64 = 0.5;

/// Contracts the cloud by repeatedly solving
/// `[W_L L; W_H] P' = [0; W_H P]` in the least-squares sense.
///
/// One-ring connectivity is fixed from the input cloud; cotangent weights are
/// re-evaluated on the current positions every iteration.
pub fn contract(cloud: &PointCloud, params: &ContractionParams) -> Result<ContractedCloud> {
    params.validate()?;
    let n = cloud.len();
    if n < MIN_CONTRACTION_POINTS {
        return Err(Error::InsufficientPoints(n));
    }
    let mut pts = cloud.points.clone();
    let rings = build_one_rings(&pts, params.neighborhood_size);
    let area0 = one_ring_areas(&pts, &rings);
    let mean_area0 = area0.iter().sum::<f64>() / n as f64;

    let (lo, hi) = aabb(&pts).expect("non-empty");
    let diag = (hi - lo).norm().max(f64::MIN_POSITIVE);
    let norm_area = (mean_area0 / (diag * diag)).max(1e-12);
    let mut wl = (params.init_contraction_weight / norm_area.sqrt()).min(params.max_contraction_weight);
    let wl_floor = wl;
    let mut wh = vec![params.init_attraction_weight; n];

    let mut volumes = vec![aabb_volume(&pts)];
    let mut spread = principal_spread(&pts);
    let mut iterations = 0;
    let mut frozen = false;
    for t in 1..=params.max_iterations {
        let lap = cotangent_laplacian(&pts, &rings, params.max_cot);
        let next = solve_step(&lap, wl, &wh, &pts).map_err(|reason| Error::SolverFailure {
            iteration: t,
            reason,
        })?;
        let vol_prev = *volumes.last().unwrap();
        let vol = aabb_volume(&next);
        let next_spread = principal_spread(&next);
        let grew = vol > vol_prev;
        let collapsed = next_spread < (1.0 - params.max_spread_loss) * spread;
        if grew || collapsed {
            // Step back to the last weight that behaved and stop amplifying.
            log::debug!("iteration {t}: rejected (volume grew: {grew}, axial collapse: {collapsed})");
            let backed = wl / params.contraction_amplification;
            if backed < wl_floor {
                break;
            }
            wl = backed;
            frozen = true;
            continue;
        }
        pts = next;
        spread = next_spread;
        volumes.push(vol);
        iterations += 1;

        let areas = one_ring_areas(&pts, &rings);
        let mean_area = areas.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            let ratio = if areas[i] > 0.0 {
                (area0[i] / areas[i]).sqrt()
            } else {
                f64::INFINITY
            };
            wh[i] = (params.init_attraction_weight * ratio).min(params.max_attraction_weight);
        }
        if !frozen {
            wl = (wl * params.contraction_amplification).min(params.max_contraction_weight);
        }

        let ratio = if vol_prev > 0.0 { vol / vol_prev } else { 1.0 };
        log::debug!("iteration {t}: volume ratio {ratio:.4}, area ratio {:.3e}", mean_area / mean_area0);
        if mean_area <= params.termination_area_ratio * mean_area0 || vol == 0.0 {
            break;
        }
        // A weak first step says nothing about convergence; only judge the
        // volume ratio once contraction is under way.
        if mean_area <= STARTED_AREA_RATIO * mean_area0 && ratio > params.convergence_ratio {
            break;
        }
    }
    let neighbors = rings
        .fans
        .iter()
        .map(|fan| {
            let mut v: Vec<usize> = fan.iter().flatten().copied().collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    Ok(ContractedCloud {
        points: pts,
        iterations_used: iterations,
        volume_history: volumes,
        neighbors,
    })
}

/// Solves for the displacement `D = P' - P`, which satisfies
/// `(W_L^2 L^T L + W_H^2) D = -W_L^2 L^T L P`. Working with the displacement
/// keeps the system translation invariant because rows of `L` sum to zero.
/// The matrix is symmetric positive definite and factored once per step
/// (sparse LDL^T, reverse Cuthill-McKee ordering) for all three axes.
fn solve_step(lap: &CsrMatrix, wl: f64, wh: &[f64], pts: &[Point3]) -> std::result::Result<Vec<Point3>, String> {
    let n = pts.len();
    let wl2 = wl * wl;
    let l = CsMat::new((n, n), lap.row_ptr.clone(), lap.col_idx.clone(), lap.values.clone());
    let ltl = &l.transpose_view().to_csr() * &l;
    let mut tri = TriMat::new((n, n));
    for (v, (i, j)) in ltl.iter() {
        tri.add_triplet(i, j, wl2 * v);
    }
    for (i, w) in wh.iter().enumerate() {
        tri.add_triplet(i, i, w * w);
    }
    let a: CsMat<f64> = tri.to_csc();
    let ldl = Ldl::new()
        .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
        .check_symmetry(SymmetryCheck::DontCheckSymmetry)
        .numeric(a.view())
        .map_err(|e| format!("factorization failed: {e}"))?;
    if ldl.d().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err("system matrix is singular or indefinite".into());
    }
    let mut out: Vec<Point3> = pts.to_vec();
    for axis in 0..3 {
        let coord: Vec<f64> = pts.iter().map(|p| p[axis]).collect();
        let llp = lap.mul_vec(&lap.mul_vec(&coord));
        let b: Vec<f64> = llp.iter().map(|v| -wl2 * v).collect();
        let d: Vec<f64> = ldl.solve(&b);
        for i in 0..n {
            out[i][axis] += d[i];
        }
    }
    if out.iter().any(|p| !crate::geometry::is_finite(p)) {
        return Err("non-finite solution".into());
    }
    Ok(out)
}

/// Standard deviation along the principal direction.
fn principal_spread(points: &[Point3]) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.coords).sum::<Vec3>() / n;
    let mut cov = nalgebra::Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov / n);
    eig.eigenvalues.max().max(0.0).sqrt()
}

/// RMS distance of points to the infinite line through `origin` along `dir`.
pub fn rms_line_distance(points: &[Point3], origin: &Point3, dir: &Vec3) -> f64 {
    let d = dir.normalize();
    let sum: f64 = points
        .iter()
        .map(|p| {
            let v = p - origin;
            (v - d * v.dot(&d)).norm_squared()
        })
        .sum();
    (sum / points.len() as f64).sqrt()
}
