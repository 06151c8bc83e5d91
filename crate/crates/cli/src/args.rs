use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use syncmatch::pipeline::PipelineMode;
use syncmatch::synthetic::Motion;

#[derive(Debug, Parser)]
#[command(
    name = "syncmatch",
    version,
    about = "Multiview RGB-D registration on synthetic or exported scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scene directory: frames, depth maps, intrinsics, ground-truth poses.
    Generate(GenerateArgs),
    /// Register every frame of a scene directory.
    Register(RegisterArgs),
    /// Compare synchronization backends on perturbed random pose graphs.
    BenchSync(BenchArgs),
    /// Score estimated poses and correspondences against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub frames: u32,
    #[arg(long, default_value_t = 2000)]
    pub landmarks: usize,
    #[arg(long, default_value = "lateral_pan")]
    pub motion: Motion,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub descriptor_dim: usize,
    /// Camera spacing for lateral_pan, meters.
    #[arg(long)]
    pub pan_step: Option<f64>,
    /// Angular step for orbit, degrees.
    #[arg(long)]
    pub orbit_step_deg: Option<f64>,
    /// Forward step for corridor, meters.
    #[arg(long)]
    pub corridor_step: Option<f64>,
    /// Fraction of landmarks duplicated at --repeat-offset with the same descriptor.
    #[arg(long, default_value_t = 0.0)]
    pub repeat_fraction: f64,
    /// Offset of repeated landmarks as x,y,z in meters.
    #[arg(long, value_delimiter = ',', default_values_t = [4.5, 0.0, 0.0])]
    pub repeat_offset: Vec<f64>,
    #[command(flatten)]
    pub corruption: CorruptionArgs,
}

#[derive(Debug, Args)]
pub struct CorruptionArgs {
    #[arg(long, default_value_t = 0.0)]
    pub descriptor_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outlier_fraction: f64,
    /// Radial depth noise, meters.
    #[arg(long, default_value_t = 0.0)]
    pub depth_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub drop_fraction: f64,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Scene directory with frame_XXX.fpcl files.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Confidence threshold for non-adjacent pairs.
    #[arg(long, default_value_t = 0.4)]
    pub gamma: f64,
    /// Weight of the point distance in geometry-aware matching.
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// Correspondences kept per pair.
    #[arg(long, default_value_t = 500)]
    pub topk: usize,
    #[arg(long, default_value = "full")]
    pub mode: PipelineMode,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    #[arg(long, default_value_t = 128)]
    pub ransac_hypotheses: usize,
    #[arg(long, default_value_t = 8)]
    pub ransac_sample_size: usize,
    /// Inlier residual bound, meters.
    #[arg(long, default_value_t = 0.05)]
    pub ransac_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// CSV output path; the manifest is written next to it.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [6usize, 30])]
    pub frames: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Rotation noise levels, degrees.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 5.0, 10.0])]
    pub rot_sigmas: Vec<f64>,
    /// Translation noise levels, meters.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.02, 0.05])]
    pub trans_sigmas: Vec<f64>,
    /// Prepend a noise-free row to the grid.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub zero_row: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Matcher {
    Feature,
    Gart,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Scene directory with frames, intrinsics.txt and gt_poses.txt.
    #[arg(long)]
    pub scene: PathBuf,
    /// Estimated poses, e.g. from `register`.
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Matcher used for the correspondence report on adjacent pairs; gart
    /// uses the estimated poses.
    #[arg(long, value_enum, default_value_t = Matcher::Gart)]
    pub matcher: Matcher,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 500)]
    pub topk: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
