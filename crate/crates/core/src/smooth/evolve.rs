//! Curve smoothing by gradient descent on a distance-plus-length energy.

use serde::{Deserialize, Serialize};

use super::field::{voxelize_curve, DistanceField};
use crate::error::{Error, Result};
use crate::geometry::{point_at_arclength, Point3, Polyline, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingParams {
    /// Smoothing weight, in voxel units: the length term of the energy is
    /// `weight * voxel_size * length`.
    pub weight: f64,
    pub voxel_size: f64,
    pub max_outer_iterations: usize,
    /// Step length in voxels.
    pub step: f64,
    /// Stop once an accepted step lowers the energy by less than this
    /// fraction of the initial energy.
    pub convergence_delta: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            weight: 1.0,
            voxel_size: 0.01,
            max_outer_iterations: 200,
            step: 0.25,
            convergence_delta: 1e-6,
        }
    }
}

impl SmoothingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidInput("smoothing weight must be non-negative".into()));
        }
        for (name, v) in [("voxel_size", self.voxel_size), ("step", self.step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_outer_iterations < 1 {
            return Err(Error::InvalidInput("max_outer_iterations must be >= 1".into()));
        }
        if !(self.convergence_delta >= 0.0) {
            return Err(Error::InvalidInput("convergence_delta must be non-negative".into()));
        }
        Ok(())
    }

    /// Spacing of the working curve: half a voxel.
    pub fn spacing(&self) -> f64 {
        0.5 * self.voxel_size
    }
}

/// Points at arc-length multiples of `spacing` from the start, plus the end
/// point. All gaps but the last equal `spacing` along the input curve.
pub fn reparameterize(curve: &Polyline, spacing: f64) -> Result<Polyline> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!("spacing must be positive, got {spacing}")));
    }
    let pts = curve.points();
    let cum = curve.cumulative_lengths();
    let total = *cum.last().unwrap();
    let steps = (total / spacing).floor() as usize;
    let mut out = Vec::with_capacity(steps + 2);
    for i in 0..=steps {
        out.push(point_at_arclength(pts, &cum, i as f64 * spacing));
    }
    // A remainder shorter than a thousandth of the spacing is absorbed by
    // moving the last sample onto the end point.
    if total - steps as f64 * spacing > 1e-3 * spacing {
        out.push(curve.last());
    } else if let Some(last) = out.last_mut() {
        *last = curve.last();
    }
    if out.len() < 2 {
        out = vec![curve.first(), curve.last()];
    }
    Polyline::new(out)
}

/// `E = sum_i d(p_i) * ds_i + weight * voxel_size * length`, with `ds_i` the
/// arc length attributed to vertex `i` (half of each adjacent segment).
pub fn curve_energy(points: &[Point3], field: &DistanceField, params: &SmoothingParams) -> f64 {
    let n = points.len();
    let seg: Vec<f64> = points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let length: f64 = seg.iter().sum();
    let mut data = 0.0;
    for i in 0..n {
        let ds = 0.5 * (if i > 0 { seg[i - 1] } else { 0.0 } + if i + 1 < n { seg[i] } else { 0.0 });
        data += field.sample(&points[i]) * ds;
    }
    data + params.weight * params.voxel_size * length
}

/// Discrete curvature vector `k N` at interior vertices (second derivative
/// with respect to arc length); zero at the ends.
pub fn curvature_vectors(points: &[Point3]) -> Vec<Vec3> {
    let n = points.len();
    let mut out = vec![Vec3::zeros(); n];
    for i in 1..n.saturating_sub(1) {
        let a = (points[i] - points[i - 1]).norm();
        let b = (points[i + 1] - points[i]).norm();
        if a > 0.0 && b > 0.0 {
            out[i] = ((points[i + 1] - points[i]) / b - (points[i] - points[i - 1]) / a) * (2.0 / (a + b));
        }
    }
    out
}

/// One step of `C_t = -grad d + w k N`. The distance term is explicit; the
/// curvature term is implicit (a tridiagonal solve per axis), which keeps
/// the step stable at any weight. Ends stay fixed.
fn evolve_step(points: &[Point3], field: &DistanceField, params: &SmoothingParams, tau: f64) -> Vec<Point3> {
    let n = points.len();
    let wk = params.weight * params.voxel_size;
    let grads: Vec<Vec3> = {
        use rayon::prelude::*;
        points.par_iter().map(|p| field.gradient(p)).collect()
    };
    let seg: Vec<f64> = points.windows(2).map(|w| (w[1] - w[0]).norm().max(1e-12)).collect();
    // Row i: -l_i x_{i-1} + (1 + l_i + u_i) x_i - u_i x_{i+1} = rhs_i.
    let m = n - 2;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for r in 0..m {
        let i = r + 1;
        let (a, b) = (seg[i - 1], seg[i]);
        let c = tau * wk * 2.0 / (a + b);
        lower[r] = c / a;
        upper[r] = c / b;
        diag[r] = 1.0 + lower[r] + upper[r];
    }
    let mut out = points.to_vec();
    for axis in 0..3 {
        let mut rhs: Vec<f64> = (0..m).map(|r| points[r + 1][axis] - tau * grads[r + 1][axis]).collect();
        rhs[0] += lower[0] * points[0][axis];
        rhs[m - 1] += upper[m - 1] * points[n - 1][axis];
        // Thomas algorithm.
        let mut c_prime = vec![0.0; m];
        let mut d_prime = vec![0.0; m];
        c_prime[0] = -upper[0] / diag[0];
        d_prime[0] = rhs[0] / diag[0];
        for r in 1..m {
            let denom = diag[r] + lower[r] * c_prime[r - 1];
            c_prime[r] = -upper[r] / denom;
            d_prime[r] = (rhs[r] + lower[r] * d_prime[r - 1]) / denom;
        }
        let mut x = vec![0.0; m];
        x[m - 1] = d_prime[m - 1];
        for r in (0..m - 1).rev() {
            x[r] = d_prime[r] - c_prime[r] * x[r + 1];
        }
        for r in 0..m {
            out[r + 1][axis] = x[r];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingReport {
    /// Energy of the initial curve and after every accepted step.
    pub energy_log: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Set when three consecutive steps failed to lower the energy even
    /// after halving; the best curve so far is returned.
    pub stalled: bool,
}

/// Smooths `curve` against the distance field of its own voxelisation.
/// Each iteration evolves the curve, reparameterises it at half a voxel and
/// keeps the result only if the energy dropped (otherwise the step is
/// halved). End points never move.
pub fn smooth_curve(curve: &Polyline, params: &SmoothingParams) -> Result<(Polyline, SmoothingReport)> {
    params.validate()?;
    if curve.len() < 3 {
        return Err(Error::InvalidInput(format!("smoothing needs at least 3 points, got {}", curve.len())));
    }
    let spacing = params.spacing();
    let start = reparameterize(curve, spacing)?;
    let field = voxelize_curve(&start, params.voxel_size)?;
    let mut current = start.into_points();
    if current.len() < 3 {
        return Ok((
            Polyline::new(current)?,
            SmoothingReport {
                energy_log: vec![],
                accepted_steps: 0,
                rejected_steps: 0,
                stalled: false,
            },
        ));
    }
    let mut energy = curve_energy(&current, &field, params);
    let threshold = params.convergence_delta * energy;
    let mut report = SmoothingReport {
        energy_log: vec![energy],
        accepted_steps: 0,
        rejected_steps: 0,
        stalled: false,
    };
    let mut tau = params.step * params.voxel_size;
    let mut failures = 0;
    for _ in 0..params.max_outer_iterations {
        let moved = evolve_step(&current, &field, params, tau);
        let trial = match Polyline::from_points_dedup(moved, 0.0).and_then(|p| reparameterize(&p, spacing)) {
            Ok(p) => p.into_points(),
            Err(_) => Vec::new(),
        };
        let trial_energy = if trial.len() >= 3 { curve_energy(&trial, &field, params) } else { f64::INFINITY };
        if trial_energy < energy {
            let drop = energy - trial_energy;
            current = trial;
            energy = trial_energy;
            report.energy_log.push(energy);
            report.accepted_steps += 1;
            failures = 0;
            if drop < threshold {
                break;
            }
        } else {
            report.rejected_steps += 1;
            failures += 1;
            if failures >= 3 {
                report.stalled = true;
                log::debug!("smoothing stalled after {} accepted steps", report.accepted_steps);
                break;
            }
            tau *= 0.5;
        }
    }
    Ok((Polyline::new(current)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_polyline_distance;

    fn pl(v: Vec<Point3>) -> Polyline {
        Polyline::new(v).unwrap()
    }

    #[test]
    fn reparameterize_segment() {
        let out = reparameterize(&pl(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]), 0.25).unwrap();
        let xs: Vec<f64> = out.points().iter().map(|p| p.x).collect();
        assert_eq!(xs.len(), 5);
        for (x, e) in xs.iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn reparameterize_uneven_quarter_circle() {
        // Quadratically bunched samples.
        let pts: Vec<Point3> = (0..=40)
            .map(|i| {
                let t = (i as f64 / 40.0).powi(2) * std::f64::consts::FRAC_PI_2;
                Point3::new(t.cos(), t.sin(), 0.0)
            })
            .collect();
        let curve = pl(pts);
        let sp = 0.01;
        let out = reparameterize(&curve, sp).unwrap();
        let p = out.points();
        assert_eq!(p[0], curve.first());
        assert_eq!(*p.last().unwrap(), curve.last());
        // Arc-length oracle: sample j sits at arc length j * sp on the input.
        let cum = curve.cumulative_lengths();
        for (j, q) in p.iter().enumerate().take(p.len() - 1) {
            let expect = point_at_arclength(curve.points(), &cum, j as f64 * sp);
            assert!((q - expect).norm() < 1e-12);
        }
        for w in p[..p.len() - 1].windows(2) {
            assert!(((w[1] - w[0]).norm() - sp).abs() < 0.01 * sp);
        }
        assert!((out.length() - curve.length()).abs() < sp);
    }

    fn straight() -> Polyline {
        pl((0..=10).map(|i| Point3::new(i as f64 * 0.1, 0.0, 0.0)).collect())
    }

    fn zigzag(h: f64) -> Polyline {
        pl((0..=60)
            .map(|i| Point3::new(i as f64 * 2.0 * h, if i % 2 == 0 { 0.0 } else { 4.0 * h }, 0.0))
            .collect())
    }

    #[test]
    fn straight_line_is_a_fixed_point() {
        let p = SmoothingParams::default();
        let (out, _) = smooth_curve(&straight(), &p).unwrap();
        for q in out.points() {
            assert!(q.y.abs() < p.voxel_size && q.z.abs() < p.voxel_size);
        }
        assert_eq!(out.first(), straight().first());
        assert_eq!(out.last(), straight().last());
    }

    fn lateral_spread(c: &Polyline) -> f64 {
        let ys: Vec<f64> = c.points().iter().map(|p| p.y).collect();
        ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min)
    }

    #[test]
    fn zigzag_is_flattened_and_energy_drops() {
        let p = SmoothingParams::default();
        let input = zigzag(p.voxel_size);
        let (out, report) = smooth_curve(&input, &p).unwrap();
        assert!(lateral_spread(&out) < lateral_spread(&input));
        // Energy of both curves on the same field, by the module and by an
        // independent summation.
        let start = reparameterize(&input, p.spacing()).unwrap();
        let field = voxelize_curve(&start, p.voxel_size).unwrap();
        let e_in = curve_energy(start.points(), &field, &p);
        let e_out = curve_energy(out.points(), &field, &p);
        assert!(e_out < e_in);
        let independent = |c: &[Point3]| {
            let mut e = 0.0;
            for w in c.windows(2) {
                let len = (w[1] - w[0]).norm();
                e += 0.5 * (field.sample(&w[0]) + field.sample(&w[1])) * len + p.weight * p.voxel_size * len;
            }
            e
        };
        assert!((independent(start.points()) - e_in).abs() < 1e-9 * e_in);
        assert!((independent(out.points()) - e_out).abs() < 1e-9 * e_in);
        assert!(report.energy_log.windows(2).all(|w| w[1] < w[0]));
        assert!((report.energy_log[0] - e_in).abs() < 1e-12);
    }

    #[test]
    fn heavier_weight_gives_a_shorter_curve() {
        let p = SmoothingParams::default();
        let input = zigzag(p.voxel_size);
        let (a, _) = smooth_curve(&input, &p).unwrap();
        let (b, _) = smooth_curve(&input, &SmoothingParams { weight: 2.0 * p.weight, ..p.clone() }).unwrap();
        assert!(b.length() <= a.length() + p.voxel_size, "{} vs {}", b.length(), a.length());
    }

    #[test]
    fn endpoints_are_pinned_and_curve_stays_near_input() {
        let p = SmoothingParams::default();
        let arc = pl((0..=30)
            .map(|i| {
                let t = i as f64 / 30.0 * std::f64::consts::FRAC_PI_2;
                Point3::new(0.5 * t.cos(), 0.5 * t.sin(), 0.1 * t)
            })
            .collect());
        let (out, _) = smooth_curve(&arc, &p).unwrap();
        assert_eq!(out.first(), arc.first());
        assert_eq!(out.last(), arc.last());
        for q in out.points() {
            assert!(point_polyline_distance(q, arc.points()) < 2.0 * p.voxel_size);
        }
    }
}
