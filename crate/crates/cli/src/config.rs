//! Config files, flag overrides and the CLI error type.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use piperecon::eval::Stage;
use piperecon::pipeline::PipelineConfig;

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, arguments or input files (exit 2).
    Input(String),
    /// Reconstruction could not produce a model (exit 3).
    Infeasible(String),
    /// Models and ground truth do not match up (exit 4).
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Infeasible(m) | CliError::Mismatch(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Input error prefixed with the offending path.
pub fn input_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// Pipeline config, TOML or JSON by extension. Unknown keys are errors.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Stage toggles: pure, base, +smooth, +elong, +elong+smooth, or a
    /// comma-separated list (or `all`) for batch commands.
    #[arg(long, allow_hyphen_values = true)]
    pub stages: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Evaluation voxel size in metres.
    #[arg(long)]
    pub voxel_size: Option<f64>,
}

impl ConfigArgs {
    /// Config file (or defaults) with the flags applied, validated.
    pub fn load(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            None => PipelineConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| input_err(path, e))?;
                let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
                match ext {
                    "json" => serde_json::from_str(&text).map_err(|e| input_err(path, e))?,
                    "toml" => toml::from_str(&text).map_err(|e| input_err(path, e))?,
                    _ => return Err(input_err(path, "config must end in .toml or .json")),
                }
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(jobs) = self.jobs {
            cfg.jobs = jobs;
        }
        if let Some(v) = self.voxel_size {
            cfg.eval_voxel_size = v;
        }
        cfg.validate().map_err(|e| CliError::Input(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Stages named by `--stages`, or `None` when the flag is absent.
    pub fn stages(&self) -> CliResult<Option<Vec<Stage>>> {
        let Some(spec) = &self.stages else {
            return Ok(None);
        };
        if spec.trim() == "all" {
            return Ok(Some(Stage::ALL.to_vec()));
        }
        let mut out = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let st: Stage = part.parse().map_err(|e: piperecon::Error| CliError::Input(e.to_string()))?;
            if !out.contains(&st) {
                out.push(st);
            }
        }
        if out.is_empty() {
            return Err(CliError::Input("--stages is empty".into()));
        }
        Ok(Some(out))
    }
}

/// Directory name for a stage's models (`+` is awkward in paths).
pub fn stage_dir(stage: Stage) -> &'static str {
    match stage {
        Stage::Pure => "pure",
        Stage::Base => "base",
        Stage::Smooth => "smooth",
        Stage::Elong => "elong",
        Stage::ElongSmooth => "elong_smooth",
    }
}

/// Runs `f` on a pool with `jobs` threads (0: rayon's default).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lists() {
        let a = ConfigArgs { stages: Some("base, +elong,base".into()), ..Default::default() };
        assert_eq!(a.stages().unwrap(), Some(vec![Stage::Base, Stage::Elong]));
        let a = ConfigArgs { stages: Some("all".into()), ..Default::default() };
        assert_eq!(a.stages().unwrap().unwrap().len(), 5);
        let a = ConfigArgs { stages: Some("+bogus".into()), ..Default::default() };
        assert_eq!(a.stages().unwrap_err().exit_code(), 2);
        assert_eq!(ConfigArgs::default().stages().unwrap(), None);
    }

    #[test]
    fn flags_override_defaults() {
        let a = ConfigArgs { seed: Some(9), voxel_size: Some(0.02), jobs: Some(1), ..Default::default() };
        let c = a.load().unwrap();
        assert_eq!((c.seed, c.eval_voxel_size, c.jobs), (9, 0.02, 1));
        let bad = ConfigArgs { voxel_size: Some(-1.0), ..Default::default() };
        assert_eq!(bad.load().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn stage_dirs_are_distinct() {
        let mut names: Vec<_> = Stage::ALL.iter().map(|s| stage_dir(*s)).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 5);
    }
}
