//! `ntx`: charge localization and transfer analysis for hole/particle NTO
//! cube files. See `docs/formats.md` for every file format.

mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pipeline::{MethodChoice, ReportFormats, RunConfig, SegChoice};

#[derive(Parser)]
#[command(
    name = "ntx",
    version,
    about = "Quantify charge localization and transfer between molecular subgroups \
             from hole/particle NTO cube files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment the grid by atoms and write label volumes plus voxel counts
    Segment(StageArgs),
    /// Integrate per-atom and per-subgroup charges
    Charges(StageArgs),
    /// Reconstruct subgroup charge transfer and draw transition diagrams
    Transfer(StageArgs),
    /// Compare power-diagram against gradient-ascent subgroup charges
    CompareSeg(StageArgs),
    /// Run a series of molecules from a batch config
    Batch(BatchArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Hole NTO cube file
    #[arg(long)]
    hole: PathBuf,
    /// Particle NTO cube file
    #[arg(long)]
    particle: PathBuf,
    /// Subgroup definition JSON
    #[arg(long)]
    groups: PathBuf,
    /// Output directory
    #[arg(long, default_value = "ntx-out")]
    out: PathBuf,
    /// Transfer reconstruction method
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    method: MethodArg,
    /// Preference vector for the quadratic method, comma-separated row-major n*m values
    #[arg(long)]
    tp: Option<String>,
    /// Segmentation algorithm
    #[arg(long, value_enum, default_value_t = SegArg::Power)]
    seg: SegArg,
    /// Report formats, comma-separated subset of csv,json,svg
    #[arg(long, default_value = "csv,json,svg")]
    format: String,
    /// Diagram canvas size in pixels, WIDTHxHEIGHT
    #[arg(long, default_value = "640x480")]
    canvas: String,
    /// Smallest transfer value drawn as a ribbon (kept in the data either way)
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
}

#[derive(Args)]
struct BatchArgs {
    /// Batch config JSON (array of run entries)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; each item writes into a subdirectory
    #[arg(long, default_value = "ntx-out")]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Proportional,
    Quadratic,
    Both,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SegArg {
    Power,
    Gradient,
    Both,
}

impl StageArgs {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let preference = match &self.tp {
            None => None,
            Some(list) => Some(
                list.split(',')
                    .map(|tok| {
                        tok.trim()
                            .parse::<f64>()
                            .map_err(|_| anyhow::anyhow!("bad --tp entry `{tok}`"))
                    })
                    .collect::<anyhow::Result<Vec<f64>>>()?,
            ),
        };
        let (width, height) = self
            .canvas
            .split_once('x')
            .and_then(|(w, h)| Some((w.parse::<f64>().ok()?, h.parse::<f64>().ok()?)))
            .filter(|&(w, h)| w > 0.0 && h > 0.0)
            .ok_or_else(|| {
                anyhow::anyhow!("bad --canvas `{}`, expected WIDTHxHEIGHT", self.canvas)
            })?;
        Ok(RunConfig {
            hole: self.hole,
            particle: self.particle,
            groups: self.groups,
            out: self.out,
            canvas: (width, height),
            epsilon: self.epsilon,
            method: match self.method {
                MethodArg::Proportional => MethodChoice::Proportional,
                MethodArg::Quadratic => MethodChoice::Quadratic,
                MethodArg::Both => MethodChoice::Both,
            },
            preference,
            seg: match self.seg {
                SegArg::Power => SegChoice::Power,
                SegArg::Gradient => SegChoice::Gradient,
                SegArg::Both => SegChoice::Both,
            },
            formats: ReportFormats::parse(&self.format)?,
        })
    }
}

fn configure_threads() {
    if let Ok(value) = std::env::var("NTX_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                // Ignore failure: the global pool may already exist in tests.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Segment(args) => args.into_config().and_then(pipeline::cmd_segment),
        Command::Charges(args) => args.into_config().and_then(pipeline::cmd_charges),
        Command::Transfer(args) => args.into_config().and_then(pipeline::cmd_transfer),
        Command::CompareSeg(args) => args.into_config().and_then(pipeline::cmd_compare_seg),
        Command::Batch(args) => pipeline::cmd_batch(&args.config, &args.out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
