//! `kkl`: run the observation pipeline or any of its stages from the shell.
//!
//! Every subcommand takes `--config <file>` (a pipeline JSON document) and
//! stage-specific flags. Flags override config fields. The output directory is
//! taken from `--output-dir`, then the config, then `KKL_OUTPUT_DIR`, then
//! `kkl-out`.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 validation or parse
//! error, 3 numerical failure, 4 IO.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "kkl", version, about, long_about = None, term_width = 80)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Pipeline config (JSON)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory
    #[arg(short, long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// simulate the Oregonator and write truth.csv
    Simulate(SimulateArgs),

    /// render synthetic PPM frames from a simulated trajectory
    RenderFrames(RenderArgs),

    /// turn a PPM sequence (or any configured source) into outputs.csv
    Ingest(IngestArgs),

    /// pass an output series through a random stable diagonal observer
    Lift(LiftArgs),

    /// whiten lifted states and project onto principal components
    Pca(PcaArgs),

    /// align components with ground truth and estimate the period
    Align(AlignArgs),

    /// run every stage and write all artifacts with a manifest
    Pipeline(PipelineArgs),

    /// draw an SVG from a CSV series
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,

    /// Recorded time span
    #[arg(long)]
    pub horizon: Option<f64>,

    /// Simulated time discarded before recording
    #[arg(long)]
    pub warmup: Option<f64>,

    /// Sampling interval of the written trajectory
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub sim: SimulateArgs,

    #[arg(long)]
    pub width: Option<usize>,

    #[arg(long)]
    pub height: Option<usize>,

    /// Uniform pixel noise amplitude, fraction of full scale
    #[arg(long)]
    pub noise: Option<f64>,

    /// Pixel noise seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,

    /// PPM directory or pattern with one `*`; replaces the configured source
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,

    /// Time between frames
    #[arg(long)]
    pub frame_interval: Option<f64>,

    /// Region of interest as x0,y0,width,height
    #[arg(long, value_name = "X0,Y0,W,H")]
    pub roi: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ObserverArgs {
    /// Smallest observer rate
    #[arg(long)]
    pub rate_min: Option<f64>,

    /// Largest observer rate
    #[arg(long)]
    pub rate_max: Option<f64>,

    /// Observer seed
    #[arg(long)]
    pub observer_seed: Option<u64>,

    /// Plant order used to size the observer
    #[arg(long)]
    pub state_dim: Option<usize>,

    /// Observer order, overriding p(n+1)
    #[arg(long)]
    pub order: Option<usize>,
}

#[derive(Args, Debug)]
pub struct LiftArgs {
    #[command(flatten)]
    pub common: Common,

    /// Output series `t,y1,...`; defaults to the configured source
    #[arg(long, value_name = "CSV")]
    pub input: Option<PathBuf>,

    #[command(flatten)]
    pub observer: ObserverArgs,
}

#[derive(Args, Debug)]
pub struct PcaArgs {
    #[command(flatten)]
    pub common: Common,

    /// Lifted states `t,z1,...`
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,

    /// observer.json from `kkl lift`, for the slowest rate
    #[arg(long, value_name = "JSON")]
    pub observer: Option<PathBuf>,

    /// Slowest observer rate, when no observer file is given
    #[arg(long)]
    pub min_rate: Option<f64>,

    /// Number of components
    #[arg(long)]
    pub dim: Option<usize>,

    /// Transient discarded before fitting
    #[arg(long)]
    pub trim: Option<f64>,

    /// Leading fraction of post-transient samples used for fitting
    #[arg(long)]
    pub fit_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    #[command(flatten)]
    pub common: Common,

    /// Component series `t,pi1,...`
    #[arg(long, value_name = "CSV")]
    pub components: PathBuf,

    /// Ground truth `t,x1,...` on the same grid
    #[arg(long, value_name = "CSV")]
    pub truth: Option<PathBuf>,

    /// pca.json whose fit window marks the post-transient start
    #[arg(long, value_name = "JSON", conflicts_with = "from")]
    pub pca: Option<PathBuf>,

    /// First time included in the diagnostics
    #[arg(long)]
    pub from: Option<f64>,

    /// Largest normalized RMSE that counts as recovery
    #[arg(long)]
    pub nrmse_threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: Common,

    /// Re-run the manifest in DIR and compare artifact hashes
    #[arg(long, value_name = "DIR", conflicts_with = "config")]
    pub verify: Option<PathBuf>,

    /// Record the creation time in metadata.json
    #[arg(long)]
    pub timestamp: bool,

    #[command(flatten)]
    pub observer: ObserverArgs,

    /// Number of principal components
    #[arg(long)]
    pub target_dim: Option<usize>,

    /// Leading fraction of post-transient samples used for fitting
    #[arg(long)]
    pub fit_fraction: Option<f64>,

    /// Transient discarded before fitting
    #[arg(long)]
    pub trim: Option<f64>,

    /// Skip SVG plots
    #[arg(long)]
    pub no_plots: bool,

    /// Skip truth, outputs, lifted states and frames
    #[arg(long)]
    pub no_intermediates: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Time,
    Pair,
    Axonometric,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[command(flatten)]
    pub common: Common,

    /// Series with a `t` column
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,

    #[arg(long, value_enum, default_value = "time")]
    pub kind: PlotKind,

    /// Comma-separated columns; all for `time`, 2 for `pair`, 3 for `axonometric`
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,

    #[arg(long, default_value = "")]
    pub title: String,

    /// Output SVG; defaults to plot.svg in the output directory
    #[arg(long, value_name = "SVG")]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::RenderFrames(args) => commands::render_frames(&args),
        Command::Ingest(args) => commands::ingest(&args),
        Command::Lift(args) => commands::lift(&args),
        Command::Pca(args) => commands::pca(&args),
        Command::Align(args) => commands::align(&args),
        Command::Pipeline(args) => commands::pipeline(&args),
        Command::Plot(args) => commands::plot(&args),
    };

    match result {
        Ok(code) => code,
        Err(err) => {
            log::error!("{err:#}");
            let code = err
                .chain()
                .find_map(|e| e.downcast_ref::<kkl_core::Error>())
                .map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
