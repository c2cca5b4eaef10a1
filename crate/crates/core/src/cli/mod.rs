//! The `splatsem` command line: argument parsing, configuration layering,
//! thread-pool setup and the mapping from errors to exit codes.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{ConfigFile, Overrides, RunConfig};

use crate::error::{Error, Result};

/// Exit code for malformed or conflicting command-line flags.
pub const EXIT_BAD_FLAGS: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "splatsem",
    version,
    about = "Probabilistic semantic fusion and uncertainty rendering for 3D Gaussian splat scenes",
    after_help = "Exit codes: 0 success, 1 I/O error, 2 malformed input or empty scene, \
                  3 dimension mismatch, 4 bad flags."
)]
pub struct Cli {
    /// Config file of `key = value` lines; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (0 = all logical cores). Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Rasterizer tile edge in pixels.
    #[arg(long, global = true, value_name = "PX")]
    pub tile_size: Option<u32>,

    /// Only report warnings and errors on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse per-view semantic labels into per-gaussian Dirichlet concentrations.
    Fuse(FuseArgs),
    /// Render segmentation, expectation, variance and confidence maps for one view.
    Render(RenderArgs),
    /// Score segmentations against ground-truth labels (JSON report).
    Eval(EvalArgs),
    /// Compute sparsification curves (CSV).
    Sparsify(SparsifyArgs),
    /// Generate a synthetic scene directory with known categories.
    Synth(SynthArgs),
}

/// Inputs shared by commands that work on a scene and its cameras.
#[derive(Debug, Args, Clone, Default)]
pub struct SceneArgs {
    /// Gaussian splat PLY file.
    #[arg(long, value_name = "PLY")]
    pub scene: Option<PathBuf>,

    /// Cameras JSON file.
    #[arg(long, value_name = "JSON")]
    pub cameras: Option<PathBuf>,

    /// Directory of label images named view_NNNN.png (NNNN = camera index);
    /// without it each camera's `label_path` is used.
    #[arg(long, value_name = "DIR")]
    pub labels: Option<PathBuf>,

    /// Camera indices to use, e.g. `0..10,12,15..20` (ranges exclude the end).
    /// Default: all cameras.
    #[arg(long, value_name = "LIST")]
    pub views: Option<String>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub input: SceneArgs,

    /// Output state file.
    #[arg(long, value_name = "FILE")]
    pub state: Option<PathBuf>,

    /// Continue from an existing state instead of a fresh prior.
    #[arg(long, value_name = "FILE")]
    pub init_state: Option<PathBuf>,

    /// Number of semantic categories.
    #[arg(long, value_name = "C")]
    pub num_classes: Option<usize>,

    /// Initial concentration of every gaussian and category.
    #[arg(long, value_name = "A")]
    pub prior: Option<f64>,

    /// Concentration of the background distribution.
    #[arg(long, value_name = "A")]
    pub background: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PfmLayout {
    /// One single-channel PFM per category.
    PerChannel,
    /// One PFM holding all categories of a pixel consecutively.
    Interleaved,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub input: SceneArgs,

    /// Fused state file.
    #[arg(long, value_name = "FILE")]
    pub state: Option<PathBuf>,

    /// Index of the camera to render.
    #[arg(long, default_value_t = 0, value_name = "K")]
    pub view: usize,

    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub output: Option<PathBuf>,

    /// Layout of the multi-category PFM maps.
    #[arg(long, value_enum, default_value_t = PfmLayout::PerChannel)]
    pub pfm_layout: PfmLayout,

    /// Also write the alpha-composited color image.
    #[arg(long)]
    pub color: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: SceneArgs,

    /// Fused state file; predictions are its rendered argmax.
    #[arg(long, value_name = "FILE")]
    pub state: Option<PathBuf>,

    /// Take predictions from this directory of view_NNNN.png images instead
    /// of rendering a state.
    #[arg(long, value_name = "DIR")]
    pub pred_labels: Option<PathBuf>,

    /// Single predicted label PNG (use with --gt).
    #[arg(long, value_name = "PNG", requires = "gt")]
    pub pred: Option<PathBuf>,

    /// Single ground-truth label PNG (use with --pred).
    #[arg(long, value_name = "PNG", requires = "pred")]
    pub gt: Option<PathBuf>,

    /// Rendered RGB PNG for PSNR (single-pair mode).
    #[arg(long, value_name = "PNG", requires = "reference")]
    pub image: Option<PathBuf>,

    /// Reference RGB PNG for PSNR (single-pair mode).
    #[arg(long, value_name = "PNG", requires = "image")]
    pub reference: Option<PathBuf>,

    /// Number of semantic categories (defaults to the state's).
    #[arg(long, value_name = "C")]
    pub num_classes: Option<usize>,

    /// Write the JSON report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    /// Rank pixels of all selected views; metric is accuracy.
    Pixel,
    /// Rank whole views; metric is PSNR against each camera's image.
    Image,
}

#[derive(Debug, Args)]
pub struct SparsifyArgs {
    #[command(flatten)]
    pub input: SceneArgs,

    /// Fused state file.
    #[arg(long, value_name = "FILE")]
    pub state: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Level::Pixel)]
    pub level: Level,

    /// Comma-separated orderings: by-variance, by-expectation, by-heuristic,
    /// oracle, random. Default: all.
    #[arg(long, value_name = "LIST")]
    pub ordering: Option<String>,

    /// Number of equal-count bins.
    #[arg(long, value_name = "N")]
    pub bins: Option<usize>,

    /// Seed of the random ordering.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub output: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 50, value_name = "N")]
    pub num_gaussians: usize,

    #[arg(long, value_name = "C")]
    pub num_classes: Option<usize>,

    /// Edge length of the cube holding the gaussian means.
    #[arg(long, default_value_t = 2.0)]
    pub extent: f64,

    /// Cameras on the ring.
    #[arg(long, default_value_t = 20, value_name = "K")]
    pub num_views: usize,

    #[arg(long, default_value_t = 64)]
    pub width: u32,

    #[arg(long, default_value_t = 64)]
    pub height: u32,

    /// Probability that a label is replaced by another category.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    /// Seed of the label noise (default: --seed). View k uses 1000·seed + k.
    #[arg(long)]
    pub noise_seed: Option<u64>,
}

/// Runs the CLI on the process arguments and returns the exit code.
pub fn main_entry() -> i32 {
    run(std::env::args_os())
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 {
                0
            } else {
                EXIT_BAD_FLAGS
            };
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
    log::set_max_level(level);

    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let base = Overrides {
        tile_size: cli.tile_size,
        thread_count: cli.threads,
        ..Default::default()
    };
    let cfg = RunConfig::resolve(&file, commands::overrides(&cli.command, base))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.thread_count)
        .build()
        .map_err(|e| {
            Error::InvalidArgument(format!(
                "cannot start {} worker threads: {e}",
                cfg.thread_count
            ))
        })?;
    pool.install(|| commands::dispatch(&cli.command, &cfg))
}
