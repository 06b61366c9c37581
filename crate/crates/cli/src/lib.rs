//! `rollscan` command-line pipeline: synthesize GS bursts, compose GS/RS
//! pairs, derive ground truth, evaluate detections and run the speed sweep.
//!
//! Every command takes the same JSON [`RunConfig`]; command-line flags
//! override the matching fields. Exit codes: 0 success, 2 invalid
//! configuration, 3 invalid data, 4 I/O failure.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_annotate, cmd_compare, cmd_eval, cmd_roll, cmd_sweep, cmd_synth, SweepRow, SweepSummary};
pub use config::{load_config, resolve, OutputFormat, Overrides, ResolvedConfig, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "rollscan", version, about = "Rolling-shutter dataset synthesis and evaluation")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; every file the command writes goes under it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Ground-truth formats to write.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render GS bursts and their ground truth.
    Synth,
    /// Compose GS/RS image pairs with GS and RS ground truth.
    Roll {
        /// A `synth` output tree; without it the configured scenes are rendered directly.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Derive GS and RS ground truth for a `synth` tree without writing images.
    Annotate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Score detections against ground truth.
    Eval {
        /// COCO result list, or a YOLO directory with confidence columns.
        #[arg(long)]
        detections: PathBuf,
        /// COCO annotation file, or a YOLO label directory with images.json.
        #[arg(long)]
        gt: PathBuf,
    },
    /// Delta table between two report.json files.
    Compare { report_a: PathBuf, report_b: PathBuf },
    /// Speed sweep: GS boxes replayed against RS ground truth per speed multiplier.
    Sweep,
}

/// Loads, resolves and runs one command; returns the text to print.
pub fn run(cli: &Cli) -> CliResult<String> {
    let config = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        workers: cli.workers,
        format: cli.format,
    };
    let dir = cli.config.as_deref().and_then(|p| p.parent());
    let rc = resolve(config, dir, &overrides)?;
    Ok(match &cli.command {
        Command::Synth => {
            let s = cmd_synth(&rc)?;
            format!("{} captures, {} frames each, {} GS boxes\n", s.captures, s.frames_per_capture, s.gs_boxes)
        }
        Command::Roll { input } => {
            let s = cmd_roll(&rc, input.as_deref())?;
            format!("{} captures, {} GS boxes, {} RS boxes\n", s.captures, s.gs_boxes, s.rs_boxes)
        }
        Command::Annotate { input } => {
            let s = cmd_annotate(&rc, input)?;
            format!("{} captures, {} GS boxes, {} RS boxes\n", s.captures, s.gs_boxes, s.rs_boxes)
        }
        Command::Eval { detections, gt } => {
            let r = cmd_eval(&rc, detections, gt)?;
            rollscan_core::metrics::report_table(&[("detections", &r)])
        }
        Command::Compare { report_a, report_b } => cmd_compare(&rc, report_a, report_b)?.table("A", "B"),
        Command::Sweep => cmd_sweep(&rc)?.table(),
    })
}
