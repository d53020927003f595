//! End-to-end reconstruction of one pipe from its cloud.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Stage, DEFAULT_EVAL_VOXEL};
use crate::geometry::{PipeModel, PointCloud, Polyline, SkeletonGraph};
use crate::recon::{assemble_model, HullParams};
use crate::refine::{elongate, longest_path, rolling_sphere_recenter, ElongationParams, RollingSphereParams};
use crate::skeleton::{build_skeleton_graph, collapse_edges, contract, downsample_to, ContractionParams, DEFAULT_SAMPLE_RADIUS};
use crate::smooth::{rdp_simplify, smooth_curve, SmoothingParams, SmoothingReport, DEFAULT_RDP_FACTOR};

/// Clouds with fewer points cannot be reconstructed.
pub const MIN_CLOUD_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub contraction: ContractionParams,
    /// The cloud is voxel-downsampled to at most this many points before
    /// contraction. Later stages use the full cloud.
    pub max_contraction_points: usize,
    pub min_downsample_voxel: f64,
    pub sample_radius: f64,
    pub elongation: ElongationParams,
    pub rolling_sphere: RollingSphereParams,
    pub smoothing: SmoothingParams,
    pub rdp_factor: f64,
    pub hull: HullParams,
    /// When off, the longest path is used as the axis as is, and rolling
    /// spheres only supply the radius.
    pub enable_recentering: bool,
    pub enable_elongation: bool,
    pub enable_smoothing: bool,
    pub enable_rdp: bool,
    pub seed: u64,
    pub eval_voxel_size: f64,
    /// Worker threads for batch runs; 0 uses all cores.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            contraction: ContractionParams::default(),
            max_contraction_points: 3000,
            min_downsample_voxel: 0.005,
            sample_radius: DEFAULT_SAMPLE_RADIUS,
            elongation: ElongationParams::default(),
            rolling_sphere: RollingSphereParams::default(),
            smoothing: SmoothingParams::default(),
            rdp_factor: DEFAULT_RDP_FACTOR,
            hull: HullParams::default(),
            enable_recentering: true,
            enable_elongation: true,
            enable_smoothing: true,
            enable_rdp: true,
            seed: 0,
            eval_voxel_size: DEFAULT_EVAL_VOXEL,
            jobs: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.contraction.validate()?;
        self.elongation.validate()?;
        self.rolling_sphere.validate()?;
        self.smoothing.validate()?;
        for (name, v) in [
            ("min_downsample_voxel", self.min_downsample_voxel),
            ("sample_radius", self.sample_radius),
            ("eval_voxel_size", self.eval_voxel_size),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rdp_factor >= 0.0) {
            return Err(Error::InvalidInput(format!("rdp_factor must be non-negative, got {}", self.rdp_factor)));
        }
        if self.max_contraction_points < MIN_CLOUD_POINTS {
            return Err(Error::InvalidInput(format!("max_contraction_points must be >= {MIN_CLOUD_POINTS}")));
        }
        Ok(())
    }

    /// Sets the recentering, elongation and smoothing toggles for `stage`.
    pub fn set_stage(&mut self, stage: Stage) {
        self.enable_recentering = stage != Stage::Pure;
        self.enable_elongation = stage.elongates();
        self.enable_smoothing = stage.smooths();
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.set_stage(stage);
        self
    }

    /// Stage label of the current toggles.
    pub fn stage(&self) -> Stage {
        match (self.enable_recentering, self.enable_elongation, self.enable_smoothing) {
            (false, _, _) => Stage::Pure,
            (true, false, false) => Stage::Base,
            (true, false, true) => Stage::Smooth,
            (true, true, false) => Stage::Elong,
            (true, true, true) => Stage::ElongSmooth,
        }
    }
}

/// Intermediate result handed to the observer as soon as it exists.
#[derive(Debug, Clone, Copy)]
pub enum StageOutput<'a> {
    Contracted(&'a [crate::geometry::Point3]),
    Graph(&'a SkeletonGraph),
    Path(&'a Polyline),
    Elongated(&'a Polyline),
    Recentered(&'a Polyline),
    Smoothed(&'a Polyline),
    Simplified(&'a Polyline),
}

impl StageOutput<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            StageOutput::Contracted(_) => "contracted",
            StageOutput::Graph(_) => "graph",
            StageOutput::Path(_) => "path",
            StageOutput::Elongated(_) => "elongated",
            StageOutput::Recentered(_) => "recentered",
            StageOutput::Smoothed(_) => "smoothed",
            StageOutput::Simplified(_) => "simplified",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub model: PipeModel,
    pub stage: Stage,
    /// Spline points before simplification.
    pub n_before_rdp: usize,
    pub deleted_points: usize,
    pub smoothing: Option<SmoothingReport>,
}

fn at<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage,
        source: Box::new(e),
    })
}

pub fn reconstruct(cloud: &PointCloud, config: &PipelineConfig) -> Result<Reconstruction> {
    reconstruct_observed(cloud, config, |_| {})
}

/// Runs all enabled stages. `observe` sees every intermediate curve, so
/// callers can keep partial results when a later stage fails. Errors name
/// the failing stage.
pub fn reconstruct_observed(
    cloud: &PointCloud,
    config: &PipelineConfig,
    mut observe: impl FnMut(StageOutput<'_>),
) -> Result<Reconstruction> {
    config.validate()?;
    if cloud.len() < MIN_CLOUD_POINTS {
        return Err(Error::InsufficientPoints(cloud.len()));
    }
    let reduced = downsample_to(&cloud.points, config.max_contraction_points, config.min_downsample_voxel);
    let reduced = PointCloud::new(reduced, cloud.instance_id.clone())?;
    let contracted = at("contraction", contract(&reduced, &config.contraction))?;
    observe(StageOutput::Contracted(&contracted.points));
    let graph = at("graph", build_skeleton_graph(&contracted, config.sample_radius))?;
    let graph = collapse_edges(&graph);
    observe(StageOutput::Graph(&graph));
    let path = at("longest_path", longest_path(&graph))?;
    observe(StageOutput::Path(&path));

    let mut axis = path;
    if config.enable_elongation {
        axis = at("elongation", elongate(&axis, cloud, &config.elongation))?;
        observe(StageOutput::Elongated(&axis));
    }
    let rolled = at(
        "rolling_sphere",
        rolling_sphere_recenter(&axis, cloud, &config.rolling_sphere, config.seed),
    )?;
    let mut deleted_points = 0;
    if config.enable_recentering {
        axis = rolled.polyline.clone();
        deleted_points = rolled.deleted;
        observe(StageOutput::Recentered(&axis));
    }
    let mut smoothing = None;
    if config.enable_smoothing && axis.len() >= 3 {
        let (curve, report) = at("smoothing", smooth_curve(&axis, &config.smoothing))?;
        axis = curve;
        smoothing = Some(report);
        observe(StageOutput::Smoothed(&axis));
    }
    let n_before_rdp = axis.len();
    let model = at("assemble", assemble_model(axis, &rolled.radii))?;
    let model = if config.enable_rdp {
        let simplified = at("rdp", rdp_simplify(&model.spline, model.mean_radius, config.rdp_factor))?;
        observe(StageOutput::Simplified(&simplified));
        PipeModel::new(simplified, model.mean_radius)?
    } else {
        model
    };
    Ok(Reconstruction {
        model,
        stage: config.stage(),
        n_before_rdp,
        deleted_points,
        smoothing,
    })
}
