mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Detect images produced by text-to-image diffusion models from frozen
/// CLIP-style embeddings.
#[derive(Debug, Parser)]
#[command(name = "diffdetect", version)]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    /// Print per-epoch progress.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and merge JSONL manifests, or write a synthetic one.
    BuildManifest(BuildManifestArgs),
    /// Embed every record of a manifest into a feature store.
    Extract(ExtractArgs),
    /// Train the MLP detector and write a checkpoint.
    Train(TrainArgs),
    /// Score a split with a checkpoint and write a metrics report.
    Eval(EvalArgs),
    /// Run a grid of intra- and cross-generator cells.
    CrossEval(CrossEvalArgs),
    /// FN%/FP% per animate/inanimate bucket from a predictions file.
    AnalyzeCategories(AnalyzeCategoriesArgs),
    /// Correlate caption features with classifier outcomes.
    AnalyzeLinguistics(AnalyzeLinguisticsArgs),
    /// Render correlation reports as an SVG heatmap.
    Plot(PlotArgs),
    /// Finite-difference check of the MLP gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct BuildManifestArgs {
    /// Input manifests, merged in order.
    #[arg(
        long = "merge",
        value_name = "JSONL",
        required_unless_present = "synthetic"
    )]
    pub inputs: Vec<PathBuf>,

    /// Write a deterministic synthetic manifest instead of merging.
    #[arg(long, conflicts_with = "inputs")]
    pub synthetic: bool,

    /// Synthetic: generators to include.
    #[arg(long, value_delimiter = ',', default_value = "stable_diffusion")]
    pub generators: Vec<String>,

    /// Synthetic: dataset tag.
    #[arg(long, default_value = "mscoco")]
    pub dataset: String,

    /// Synthetic: real samples (and samples per generator) in each split.
    #[arg(long, default_value_t = 200)]
    pub train: usize,
    #[arg(long, default_value_t = 100)]
    pub val: usize,
    #[arg(long, default_value_t = 100)]
    pub test: usize,

    /// Require every generated caption to match a real record in the same split.
    #[arg(long)]
    pub paired: bool,

    #[arg(long, value_name = "JSONL")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, value_name = "JSONL")]
    pub manifest: PathBuf,

    /// Builtin profile (clip-vit, clip-rn50, stub) or a profile JSON file.
    #[arg(long)]
    pub backbone: String,

    /// image or image-text.
    #[arg(long)]
    pub mode: String,

    #[arg(long, value_name = "DEMB")]
    pub out: PathBuf,

    /// Directory that manifest image paths are relative to.
    #[arg(long, default_value = ".")]
    pub image_root: PathBuf,

    /// ONNX image encoder (required unless the backbone is stub).
    #[arg(long, value_name = "ONNX")]
    pub image_model: Option<PathBuf>,

    /// ONNX text encoder (required for image-text with a non-stub backbone).
    #[arg(long, value_name = "ONNX")]
    pub text_model: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    pub workers: usize,

    #[arg(long)]
    pub l2_normalize: bool,

    /// Stub backbone: generator seed.
    #[arg(long, default_value_t = 0)]
    pub stub_seed: u64,

    /// Stub backbone: planted direction as GENERATOR:INDEX:MAGNITUDE (repeatable).
    #[arg(long, value_name = "SPEC")]
    pub plant: Vec<String>,
}

#[derive(Debug, Args)]
pub struct MlpArgs {
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_start: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    /// Epochs without validation improvement before stopping (0 disables).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Keep blank-caption records in image-text mode.
    #[arg(long)]
    pub include_degenerate: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DEMB")]
    pub features: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub manifest: PathBuf,
    #[arg(long)]
    pub mode: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "DMLP")]
    pub out: PathBuf,
    /// Per-epoch CSV (epoch,lr,train_loss,val_acc,val_auc).
    #[arg(long, value_name = "CSV")]
    pub history: Option<PathBuf>,
    /// Train on real images plus this generator only.
    #[arg(long)]
    pub generator: Option<String>,
    /// Restrict to one dataset.
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub mlp: MlpArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "DMLP")]
    pub model: PathBuf,
    #[arg(long, value_name = "DEMB")]
    pub features: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub manifest: PathBuf,
    #[arg(long)]
    pub mode: String,
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
    /// Per-sample CSV (id,label,score,prediction).
    #[arg(long, value_name = "CSV")]
    pub predictions: Option<PathBuf>,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Evaluate on real images plus this generator only.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Recorded in the report.
    #[arg(long)]
    pub train_generator: Option<String>,
    #[arg(long, default_value = "MLP-Base")]
    pub model_name: String,
    /// Feature label recorded in the report.
    #[arg(long, default_value = "")]
    pub features_label: String,
}

#[derive(Debug, Args)]
pub struct CrossEvalArgs {
    /// Grid file (TOML, or JSON by extension).
    #[arg(long)]
    pub grid: PathBuf,
    /// Directory for one report per (cell, test generator).
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for cells that do not set their own.
    #[arg(long)]
    pub seed: u64,
    /// Directory for intra/cross tables in Markdown and CSV.
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeCategoriesArgs {
    /// Predictions CSVs, one per generator.
    #[arg(long = "predictions", value_name = "CSV", required = true)]
    pub predictions: Vec<PathBuf>,
    #[arg(long, value_name = "JSONL")]
    pub manifest: PathBuf,
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
    /// Also render a table (.csv for CSV, Markdown otherwise).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value = "MLP-Base")]
    pub model_name: String,
    #[arg(long, default_value = "image")]
    pub mode: String,
    #[arg(long, default_value = "")]
    pub features_label: String,
}

#[derive(Debug, Args)]
pub struct AnalyzeLinguisticsArgs {
    #[arg(long, value_name = "JSONL")]
    pub annotations: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub predictions: PathBuf,
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
    /// correctness or predicted.
    #[arg(long, default_value = "correctness")]
    pub target: String,
    #[arg(long, default_value = "MLP-Base")]
    pub model_name: String,
    #[arg(long, default_value = "")]
    pub generator: String,
    #[arg(long, default_value = "")]
    pub dataset: String,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Correlation reports, one heatmap row each.
    #[arg(long = "correlations", value_name = "JSON", required = true)]
    pub correlations: Vec<PathBuf>,
    #[arg(long, value_name = "SVG")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 50)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub input_dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "5,4")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Write the summary JSON here as well as to stdout.
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, true) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
