//! `splatcal`: LiDAR-camera extrinsic calibration from the command line.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 numerical
//! failure during optimization.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "splatcal", version, about = "Targetless LiDAR-camera calibration with anchored Gaussian splatting")]
struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only warnings and errors on standard error.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Jointly optimize the scene and the rig extrinsics.
    Calibrate(CalibrateArgs),
    /// Render dataset views from a checkpoint and score them.
    Render(RenderArgs),
    /// Overlay LiDAR points on the dataset images.
    Project(ProjectArgs),
    /// Compare an estimated rig against a reference.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset with known extrinsics.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Training configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `total_iters`.
    #[arg(long)]
    iters: Option<u64>,
    /// Overrides `seed` and `network_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

/// Selects dataset frames; no filter selects every frame.
#[derive(Args, Debug)]
struct FrameFilter {
    /// Camera name (repeatable).
    #[arg(long = "camera")]
    cameras: Vec<String>,
    /// Timestamp in seconds (repeatable).
    #[arg(long = "timestamp")]
    timestamps: Vec<f64>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Scene checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Rig JSON to render with; the dataset's rig when omitted.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Output directory for rendered PNG and NPY images.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FrameFilter,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    /// Dataset manifest.
    #[arg(long)]
    dataset: PathBuf,
    /// Rig JSON to project with; the dataset's rig when omitted.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Output directory for overlays and projected point lists.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FrameFilter,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Estimated rig JSON.
    #[arg(long)]
    rig: PathBuf,
    /// Reference rig JSON; the dataset's ground truth when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Dataset manifest, needed for image metrics or a ground-truth reference.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Scene checkpoint; enables PSNR and SSIM columns.
    #[arg(long, requires = "dataset")]
    checkpoint: Option<PathBuf>,
    /// Also write the table as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Named preset: from-blueprint-noise or from-lidar-noise.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<String>,
    /// Synthetic scene spec JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory for the dataset and its ground truth.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).target(env_logger::Target::Stderr).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let result = match cli.command {
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Render(a) => commands::render(a),
        Command::Project(a) => commands::project(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
