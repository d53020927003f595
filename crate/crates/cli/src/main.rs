//! `piperecon`: generate synthetic scans, reconstruct pipe models and
//! evaluate them against ground truth.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ConfigArgs;

#[derive(Parser)]
#[command(name = "piperecon", version, about = "Parametric pipe reconstruction from incomplete point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a scene (or the built-in 51-pipe dataset) into per-pipe clouds,
    /// ground-truth files and a manifest.
    Generate(GenerateArgs),
    /// Reconstruct one cloud into a model JSON and an OBJ hull.
    Reconstruct(ReconstructArgs),
    /// Score models against the ground truth listed in a manifest.
    Evaluate(EvaluateArgs),
    /// Generate, reconstruct every pipe for every stage, and evaluate.
    All(AllArgs),
    /// Print the effective config (defaults, file and flags) as TOML.
    Config(ConfigArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
pub struct SceneSource {
    /// Scene JSON with pipes and scan stations.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Use the built-in 51-pipe dataset (15 bends) generated from --seed.
    #[arg(long)]
    pub dataset: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CloudFormat {
    Ply,
    Xyz,
}

impl CloudFormat {
    pub fn extension(self) -> &'static str {
        match self {
            CloudFormat::Ply => "ply",
            CloudFormat::Xyz => "xyz",
        }
    }
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub source: SceneSource,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "ply")]
    pub format: CloudFormat,
    /// Seed for the dataset layout and scanner noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ReconstructArgs {
    /// Cloud file (.xyz, .txt, .pts or .ply).
    pub cloud: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Instance id used for output names; defaults to the file stem.
    #[arg(long)]
    pub id: Option<String>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Write every intermediate curve next to the model.
    #[arg(long)]
    pub dump_intermediate: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Manifest written by `generate`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `<id>.model.json` files, or one subdirectory per
    /// stage when several stages are given.
    #[arg(long)]
    pub models: PathBuf,
    /// Metrics CSV to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct AllArgs {
    #[command(flatten)]
    pub source: SceneSource,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "ply")]
    pub format: CloudFormat,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub dump_intermediate: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Reconstruct(a) => commands::reconstruct(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::All(a) => commands::all(&a),
        Command::Config(a) => commands::print_config(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
