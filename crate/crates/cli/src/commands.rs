use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use piperecon::eval::{evaluate as score, Stage};
use piperecon::io::{
    read_cloud, write_cloud, write_metrics_csv, write_obj, write_polyline_xyz, GroundTruthFile, Manifest,
    ManifestEntry, MetricsRow, ModelFile,
};
use piperecon::pipeline::{reconstruct_observed, PipelineConfig, StageOutput};
use piperecon::recon::extrude_hull;
use piperecon::synth::dataset::paper_shaped_scene;
use piperecon::synth::{make_ground_truth, virtual_scan, ScanOptions, Scene};
use piperecon::{Error, PointCloud, SkeletonGraph};

use crate::config::{input_err, stage_dir, with_pool, CliError, CliResult, ConfigArgs};
use crate::{AllArgs, CloudFormat, EvaluateArgs, GenerateArgs, ReconstructArgs, SceneSource};

pub const MANIFEST_NAME: &str = "manifest.json";

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| input_err(path, e))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| input_err(path, e))
}

fn load_scene(source: &SceneSource, seed: u64) -> CliResult<Scene> {
    match &source.scene {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| input_err(path, e))?;
            Scene::from_json(&text).map_err(|e| input_err(path, e))
        }
        None => paper_shaped_scene(seed).map_err(|e| CliError::Input(format!("dataset: {e}"))),
    }
}

/// Scans the scene into `out` and returns the manifest it wrote.
fn generate_into(source: &SceneSource, out: &Path, format: CloudFormat, seed: u64) -> CliResult<Manifest> {
    let scene = load_scene(source, seed)?;
    let opts = ScanOptions { jitter_sigma: scene.jitter_sigma, seed, ..Default::default() };
    let (clouds, report) =
        virtual_scan(&scene.pipes, &scene.stations, &opts).map_err(|e| CliError::Input(format!("scan: {e}")))?;
    info!("cast {} rays, {} images skipped", report.rays_cast, report.images_skipped);
    for dir in ["clouds", "ground_truth"] {
        create_dir(&out.join(dir))?;
    }
    let mut entries = Vec::with_capacity(scene.pipes.len());
    for ((pipe, cloud), empty) in scene.pipes.iter().zip(&clouds).zip(&report.empty) {
        let cloud_rel = format!("clouds/{}.{}", pipe.id, format.extension());
        let gt_rel = format!("ground_truth/{}.json", pipe.id);
        write_cloud(&out.join(&cloud_rel), cloud).map_err(|e| input_err(&out.join(&cloud_rel), e))?;
        let gt = make_ground_truth(&pipe.spec, &pipe.id).map_err(|e| CliError::Input(format!("{}: {e}", pipe.id)))?;
        write_file(&out.join(&gt_rel), &GroundTruthFile::new(&gt).to_json())?;
        if *empty {
            warn!("{} received no points", pipe.id);
        }
        entries.push(ManifestEntry {
            id: pipe.id.clone(),
            kind: pipe.kind,
            cloud: cloud_rel,
            ground_truth: gt_rel,
            points: cloud.len(),
            empty: *empty,
        });
    }
    let manifest = Manifest { seed, entries };
    write_file(&out.join("scene.json"), &scene.to_json())?;
    write_file(&out.join(MANIFEST_NAME), &manifest.to_json())?;
    Ok(manifest)
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let m = generate_into(&args.source, &args.out, args.format, args.seed)?;
    eprintln!("wrote {} clouds to {}", m.entries.len(), args.out.display());
    Ok(())
}

fn write_graph_obj(path: &Path, g: &SkeletonGraph) -> piperecon::Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for p in &g.nodes {
        writeln!(w, "v {} {} {}", p.x, p.y, p.z)?;
    }
    for (a, b) in &g.edges {
        writeln!(w, "l {} {}", a + 1, b + 1)?;
    }
    w.flush()?;
    Ok(())
}

fn dump(out: &Path, id: &str, s: StageOutput<'_>) {
    let path = match s {
        StageOutput::Graph(_) => out.join(format!("{id}.graph.obj")),
        _ => out.join(format!("{id}.{}.xyz", s.name())),
    };
    let r = match s {
        StageOutput::Contracted(p) => write_polyline_xyz(&path, p),
        StageOutput::Graph(g) => write_graph_obj(&path, g),
        StageOutput::Path(p)
        | StageOutput::Elongated(p)
        | StageOutput::Recentered(p)
        | StageOutput::Smoothed(p)
        | StageOutput::Simplified(p) => write_polyline_xyz(&path, p.points()),
    };
    if let Err(e) = r {
        warn!("could not write {}: {e}", path.display());
    }
}

/// Reconstructs one cloud into `<out>/<id>.model.json` and `<out>/<id>.obj`.
fn reconstruct_one(cloud: &PointCloud, id: &str, cfg: &PipelineConfig, out: &Path, dump_stages: bool) -> CliResult<ModelFile> {
    let rec = reconstruct_observed(cloud, cfg, |s| {
        if dump_stages {
            dump(out, id, s);
        }
    })
    .map_err(|e| CliError::Infeasible(format!("{id}: {e}")))?;
    let mesh = extrude_hull(&rec.model, &cfg.hull).map_err(|e| CliError::Infeasible(format!("{id}: hull: {e}")))?;
    let file = ModelFile::new(id, rec.stage, &rec.model, rec.n_before_rdp);
    write_file(&out.join(format!("{id}.model.json")), &file.to_json())?;
    let obj = out.join(format!("{id}.obj"));
    let mut w = std::io::BufWriter::new(fs::File::create(&obj).map_err(|e| input_err(&obj, e))?);
    write_obj(&mut w, &mesh).and_then(|_| Ok(w.flush()?)).map_err(|e| input_err(&obj, e))?;
    Ok(file)
}

pub fn reconstruct(args: &ReconstructArgs) -> CliResult<()> {
    let mut cfg = args.config.load()?;
    match args.config.stages()?.as_deref() {
        None => {}
        Some([st]) => cfg.set_stage(*st),
        Some(_) => return Err(CliError::Input("reconstruct takes a single stage".into())),
    }
    let cloud = read_cloud(&args.cloud).map_err(|e| input_err(&args.cloud, e))?;
    let id = args.id.clone().unwrap_or_else(|| cloud.instance_id.clone());
    create_dir(&args.out)?;
    let file = with_pool(cfg.jobs, || reconstruct_one(&cloud, &id, &cfg, &args.out, args.dump_intermediate))??;
    eprintln!(
        "{id}: {} spline points, mean radius {:.4}, axis length {:.4}",
        file.spline.len(),
        file.mean_radius,
        file.axis_length
    );
    Ok(())
}

fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    Manifest::from_json(&text).map_err(|e| input_err(path, e))
}

/// Scores one manifest entry for one stage. A missing model or a model the
/// evaluator cannot score gives a failed row; inconsistent files are errors.
fn score_entry(
    entry: &ManifestEntry,
    base: &Path,
    model_path: &Path,
    stage: Option<Stage>,
    cfg: &PipelineConfig,
) -> CliResult<MetricsRow> {
    let failed = |stage: Stage| MetricsRow { id: entry.id.clone(), kind: entry.kind, stage, report: None };
    let fallback = stage.unwrap_or_else(|| cfg.stage());
    if !model_path.exists() {
        warn!("{}: no model at {}", entry.id, model_path.display());
        return Ok(failed(fallback));
    }
    let text = fs::read_to_string(model_path).map_err(|e| input_err(model_path, e))?;
    let file = ModelFile::from_json(&text).map_err(|e| input_err(model_path, e))?;
    if file.id != entry.id {
        return Err(CliError::Mismatch(format!(
            "{}: model is for '{}', manifest expects '{}'",
            model_path.display(),
            file.id,
            entry.id
        )));
    }
    if let Some(st) = stage.filter(|st| *st != file.stage) {
        return Err(CliError::Mismatch(format!("{}: model stage {} but {st} requested", model_path.display(), file.stage)));
    }
    let gt_path = base.join(&entry.ground_truth);
    let gt_text = fs::read_to_string(&gt_path).map_err(|e| input_err(&gt_path, e))?;
    let gt = GroundTruthFile::from_json(&gt_text)
        .and_then(|g| g.ground_truth())
        .map_err(|e| input_err(&gt_path, e))?;
    if gt.id != entry.id {
        return Err(CliError::Mismatch(format!("{}: ground truth is for '{}'", gt_path.display(), gt.id)));
    }
    let cloud_path = base.join(&entry.cloud);
    let cloud = read_cloud(&cloud_path).map_err(|e| input_err(&cloud_path, e))?;
    let model = file.model().map_err(|e| input_err(model_path, e))?;
    match score(&model, &gt, &cloud, cfg.eval_voxel_size, file.n_before_rdp, file.stage) {
        Ok(report) => Ok(MetricsRow { id: entry.id.clone(), kind: entry.kind, stage: file.stage, report: Some(report) }),
        Err(e) if matches!(e.root(), Error::GridMismatch) => Err(CliError::Mismatch(format!("{}: {e}", entry.id))),
        Err(e) => {
            warn!("{}: evaluation failed: {e}", entry.id);
            Ok(failed(file.stage))
        }
    }
}

/// Rows for every (stage, entry) pair, stage-major in manifest order. With
/// explicit stages, models live in one subdirectory per stage.
fn score_manifest(
    manifest: &Manifest,
    base: &Path,
    models: &Path,
    stages: Option<&[Stage]>,
    cfg: &PipelineConfig,
) -> CliResult<Vec<MetricsRow>> {
    let plan: Vec<(Option<Stage>, PathBuf)> = match stages {
        None => vec![(None, models.to_path_buf())],
        Some(list) => list.iter().map(|st| (Some(*st), models.join(stage_dir(*st)))).collect(),
    };
    let mut rows = Vec::new();
    for (stage, dir) in plan {
        let part: Vec<CliResult<MetricsRow>> = manifest
            .entries
            .par_iter()
            .map(|e| score_entry(e, base, &dir.join(format!("{}.model.json", e.id)), stage, cfg))
            .collect();
        for r in part {
            rows.push(r?);
        }
    }
    Ok(rows)
}

fn write_metrics(path: &Path, rows: &[MetricsRow]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let f = fs::File::create(path).map_err(|e| input_err(path, e))?;
    write_metrics_csv(std::io::BufWriter::new(f), rows).map_err(|e| input_err(path, e))
}

fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let cfg = args.config.load()?;
    let stages = args.config.stages()?;
    let manifest = read_manifest(&args.manifest)?;
    let base = manifest_base(&args.manifest);
    let rows = with_pool(cfg.jobs, || score_manifest(&manifest, &base, &args.models, stages.as_deref(), &cfg))??;
    write_metrics(&args.out, &rows)?;
    let failed = rows.iter().filter(|r| r.report.is_none()).count();
    eprintln!("wrote {} rows ({failed} failed) to {}", rows.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    seed: u64,
    stages: Vec<Stage>,
    manifest: &'a str,
    metrics: &'a str,
    config: &'a PipelineConfig,
}

pub fn all(args: &AllArgs) -> CliResult<()> {
    let cfg = args.config.load()?;
    let stages = args.config.stages()?.unwrap_or_else(|| Stage::ALL.to_vec());
    let manifest = generate_into(&args.source, &args.out, args.format, cfg.seed)?;
    let models = args.out.join("models");
    with_pool(cfg.jobs, || -> CliResult<()> {
        for &st in &stages {
            let dir = models.join(stage_dir(st));
            create_dir(&dir)?;
            let stage_cfg = cfg.clone().with_stage(st);
            let results: Vec<CliResult<()>> = manifest
                .entries
                .par_iter()
                .filter(|e| !e.empty)
                .map(|e| {
                    let path = args.out.join(&e.cloud);
                    let cloud = read_cloud(&path).map_err(|err| input_err(&path, err))?;
                    match reconstruct_one(&cloud, &e.id, &stage_cfg, &dir, args.dump_intermediate) {
                        Err(CliError::Infeasible(msg)) => {
                            warn!("{st}: {msg}");
                            Ok(())
                        }
                        other => other.map(|_| ()),
                    }
                })
                .collect();
            results.into_iter().collect::<CliResult<()>>()?;
            info!("stage {st} done");
        }
        Ok(())
    })??;
    let rows = with_pool(cfg.jobs, || score_manifest(&manifest, &args.out, &models, Some(&stages), &cfg))??;
    let metrics = args.out.join("metrics.csv");
    write_metrics(&metrics, &rows)?;
    let run = RunRecord { seed: cfg.seed, stages, manifest: MANIFEST_NAME, metrics: "metrics.csv", config: &cfg };
    write_file(&args.out.join("run.json"), &(serde_json::to_string_pretty(&run).expect("run record serializes") + "\n"))?;
    let failed = rows.iter().filter(|r| r.report.is_none()).count();
    eprintln!("wrote {} rows ({failed} failed) to {}", rows.len(), metrics.display());
    Ok(())
}

pub fn print_config(args: &ConfigArgs) -> CliResult<()> {
    let mut cfg = args.load()?;
    match args.stages()?.as_deref() {
        None => {}
        Some([st]) => cfg.set_stage(*st),
        Some(_) => return Err(CliError::Input("config takes a single stage".into())),
    }
    let text = toml::to_string(&cfg).map_err(|e| CliError::Input(format!("config: {e}")))?;
    print!("{text}");
    Ok(())
}
