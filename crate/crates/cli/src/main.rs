use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::PipelineConfig;

const EXIT_CONTRACT: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Salient object discovery and segmentation on featured SfM point clouds.
///
/// Every command prints one JSON line on stdout; logs go to stderr.
/// Settings resolve as flags, then the `--config` file, then defaults.
#[derive(Debug, Parser)]
#[command(name = "salient3d", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding the pipeline artifacts [default: .].
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Every command is single-threaded and seeded; the flag pins that contract.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground truth into the output directory.
    Synth(commands::SynthArgs),
    /// Fuse multi-view features onto the reconstructed points.
    Fuse(commands::FuseArgs),
    /// Segment the fused cloud by Normalized Cut.
    SegmentNcut(commands::SegmentNcutArgs),
    /// Segment the fused cloud with trained transformer weights.
    SegmentTransformer(commands::SegmentTransformerArgs),
    /// Train the segmentation transformer on pseudo-labelled scenes.
    Train(commands::TrainArgs),
    /// Fit the ground plane and the plane-aligned box of a segmentation.
    Box(commands::BoxArgs),
    /// Derive positive, negative and ignored training labels.
    PseudoLabels(commands::PseudoLabelArgs),
    /// Detection AP of predicted boxes against ground truth.
    EvalDetection(commands::EvalArgs),
    /// Evaluate the SDF regularization losses on supplied samples.
    LossesEval(commands::LossesArgs),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

fn resolve(global: &GlobalArgs) -> salient3d::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &global.config {
        cfg.apply_file(path)?;
    }
    if let Some(dir) = &global.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.deterministic |= global.deterministic;
    Ok(cfg)
}

fn run(cli: Cli) -> salient3d::Result<serde_json::Value> {
    let mut cfg = resolve(&cli.global)?;
    match cli.command {
        Command::Synth(a) => commands::synth(&mut cfg, a),
        Command::Fuse(a) => commands::fuse(&mut cfg, a),
        Command::SegmentNcut(a) => commands::segment_ncut(&mut cfg, a),
        Command::SegmentTransformer(a) => commands::segment_transformer(&mut cfg, a),
        Command::Train(a) => commands::train(&mut cfg, a),
        Command::Box(a) => commands::fit_box(&mut cfg, a),
        Command::PseudoLabels(a) => commands::pseudo_labels(&mut cfg, a),
        Command::EvalDetection(a) => commands::eval_detection(&mut cfg, a),
        Command::LossesEval(a) => commands::losses_eval(&mut cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_CONTRACT,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.global.verbose);
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_CONTRACT })
        }
    }
}
