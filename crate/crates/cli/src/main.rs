//! `sroc-lab`: batch driver for pollution plans, detector fitting, refinement,
//! sweeps and analyses on precomputed embeddings.
//!
//! Every subcommand accepts `--config <file.json>`; flags given on the command
//! line override keys of the same name (dashes become underscores). Exit code
//! 1 means a configuration or usage error, 2 a data error.

mod commands;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use overlay::Failure;

#[derive(Parser, Debug)]
#[command(name = "sroc-lab", version, about = "Anomaly detection under training-set pollution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a pollution plan and print it as JSON.
    Pollute {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: PolluteArgs,
    },
    /// Fit a detector on the training set and print a model summary.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: FitArgs,
    },
    /// Fit on the training set and score the validation set.
    Score {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: ScoreArgs,
    },
    /// Refine the training set and report which samples were removed.
    Refine {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: RefineArgs,
    },
    /// Detector AUC over a grid of pollution ratios and seeds.
    SweepRobustness {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Every refinement strategy over a grid of refinement ratios.
    SweepRefinement {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        args: SweepArgs,
    },
    /// Mean pairwise distances within and across healthy and defective samples.
    AnalyzeDistances {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: DistanceArgs,
    },
    /// Gaussians fitted with and without pollution, projected to two axes (CSV).
    AnalyzeContours {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: ContourArgs,
    },
    /// Re-emit a saved report as CSV, JSON or a seed-aggregated summary.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: ReportArgs,
    },
    /// Write a small synthetic category (manifest, level NPYs, PNG masks).
    GenerateFixture {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: FixtureArgs,
    },
}

/// Where the embeddings come from and which training set to use.
#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct DataArgs {
    /// Category name; defaults to the manifest's directory name.
    #[arg(long)]
    pub category: Option<String>,
    /// Manifest JSON; defaults to `<category>/manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Level NPY files, comma-separated; defaults to every `*.npy` next to the manifest.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<PathBuf>>,
    /// Pollution plan written by `pollute`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Build a plan with this pollution ratio instead of reading one.
    #[arg(long)]
    pub pollution: Option<f64>,
    /// Master seed for the plan, the refinement and the PatchCore quantizer.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct DetectorArgs {
    /// knn (spade), mahalanobis, padim or patchcore.
    #[arg(long)]
    pub detector: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub nlist: Option<usize>,
    #[arg(long)]
    pub nprobe: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct PolluteArgs {
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct ScoreArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub detector: DetectorArgs,
    /// Write one `<id>.npy` anomaly map per scored image here.
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    /// Gaussian smoothing of pixel maps, in pixels.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub fpr_cap: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct RefineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// sroc, random, cross_validation or stoc.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Fraction of the training set to remove.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Detector used to score the training set.
    #[arg(long)]
    pub refiner: Option<String>,
    #[arg(long)]
    pub splits: Option<usize>,
    /// Fit this detector on the kept samples and report its validation AUC.
    #[arg(long)]
    pub final_detector: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct SweepArgs {
    /// Detector kinds, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub detectors: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub pollution_ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub refinement_pollution: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub refinement_ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    #[arg(long)]
    pub refiner: Option<String>,
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub fpr_cap: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub pixel_metrics: Option<bool>,
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
    /// Worker threads; overrides SROC_WORKERS.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Report path (`.json` for JSON, CSV otherwise); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the seed-aggregated summary CSV here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct DistanceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// train, val or all.
    #[arg(long)]
    pub subset: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct ContourArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct ReportArgs {
    /// Saved report; defaults to `report.csv`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// csv, json or summary.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    use overlay::merge;
    match cli.command {
        Command::Pollute { config, args } => commands::pollute(merge(args, config.as_deref())?),
        Command::Fit { config, args } => commands::fit(merge(args, config.as_deref())?),
        Command::Score { config, args } => commands::score(merge(args, config.as_deref())?),
        Command::Refine { config, args } => commands::refine(merge(args, config.as_deref())?),
        Command::SweepRobustness { config, args } => commands::sweep(&config, args, false),
        Command::SweepRefinement { config, args } => commands::sweep(&config, args, true),
        Command::AnalyzeDistances { config, args } => commands::distances(merge(args, config.as_deref())?),
        Command::AnalyzeContours { config, args } => commands::contours(merge(args, config.as_deref())?),
        Command::Report { config, args } => commands::report(merge(args, config.as_deref())?),
        Command::GenerateFixture { config, args } => commands::fixture(merge(args, config.as_deref())?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.code())
        }
    }
}
