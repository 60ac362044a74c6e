//! The `pelvimark` command line.
//!
//! A typical desk run:
//!
//! ```text
//! pelvimark synth --out raw --n 20 --seed 7
//! pelvimark ingest raw/dicom raw/annotations --registry raw/registry.toml --store store
//! pelvimark split --store store --counts 14,2,4 --seed 7
//! pelvimark labels --store store
//! pelvimark predict --store store --out preds --backend stub
//! pelvimark evaluate preds store --out report
//! pelvimark serve --store store --port 8080
//! ```
//!
//! Failures print one JSON object on stderr and exit with 1 (validation or
//! configuration), 2 (runtime) or 3 (inference backend).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pelvimark::ErrorKind;
use pelvimark_review::ServiceError;

mod commands;
pub mod config;

pub use config::RunConfig;
use config::{SourceArg, StdArg};

#[derive(Debug, Parser)]
#[command(name = "pelvimark", version, about = "Landmark detection and segmentation toolkit for pelvic radiographs")]
pub struct Cli {
    /// Worker threads for ingest, labels and predict.
    #[arg(long, global = true, default_value_t = default_jobs())]
    pub jobs: usize,

    /// TOML file with defaults for labels, pipeline, stub and report settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic DICOM images, annotations and a registry.
    Synth(SynthArgs),
    /// Validate DICOM files and annotations and copy them into a new store.
    Ingest(IngestArgs),
    /// Assign store images to train, val and test.
    Split(SplitArgs),
    /// Rasterize annotations and write detector label files.
    Labels(LabelArgs),
    /// Run detection and segmentation over store images.
    Predict(PredictArgs),
    /// Score predictions against store annotations.
    Evaluate(EvaluateArgs),
    /// Start the review service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub width: u32,
    #[arg(long, default_value_t = 512)]
    pub height: u32,
    #[arg(long, default_value_t = 0.5)]
    pub spacing_mm: f64,
    /// Use the 8-landmark pilot registry instead of the full one.
    #[arg(long)]
    pub pilot: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub dicom_dir: PathBuf,
    pub annotations_dir: PathBuf,
    #[arg(long)]
    pub registry: PathBuf,
    /// Directory for the new store; must not already hold one.
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// train,val,test image counts; must add up to the store size.
    #[arg(long, default_value = "80,5,15")]
    pub counts: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    #[arg(long)]
    pub input_side: Option<u32>,
    #[arg(long)]
    pub landmark_radius_mm: Option<f64>,
    #[arg(long)]
    pub stroke_mm: Option<f64>,
    #[arg(long)]
    pub fallback_spacing_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendArg {
    /// Replays rasterized ground truth with configurable corruption.
    Stub,
    /// ONNX detector and segmenter files.
    Model,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Directory for `<id>.json` and `predictions.csv`; must be empty.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub backend: BackendArg,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    #[arg(long)]
    pub detector: Option<PathBuf>,
    #[arg(long)]
    pub segmenter: Option<PathBuf>,
    #[arg(long)]
    pub input_side: Option<u32>,
    #[arg(long)]
    pub confidence_threshold: Option<f64>,
    #[arg(long)]
    pub mask_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub landmark_source: Option<SourceArg>,
    /// Seed for the stub's corruption draws.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated class codes the stub never detects.
    #[arg(long, value_delimiter = ',')]
    pub drop: Option<Vec<String>>,
    /// Per-axis Gaussian box-centre shift, model pixels.
    #[arg(long)]
    pub jitter_px: Option<f64>,
    /// Gaussian relative box-size change.
    #[arg(long)]
    pub scale_jitter: Option<f64>,
    /// Dilate (positive) or erode (negative) stub masks this many times.
    #[arg(long, allow_hyphen_values = true)]
    pub morphology: Option<i32>,
    #[arg(long)]
    pub confidence_penalty: Option<f64>,
    /// Spacing for uncalibrated images when the stub rasterizes ground truth.
    #[arg(long)]
    pub fallback_spacing_mm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory written by `predict`.
    pub predictions: PathBuf,
    /// Store holding the annotations.
    pub store: PathBuf,
    /// Directory for report.json, report.csv and report.md.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub std: Option<StdArg>,
    #[arg(long)]
    pub acceptability_mm: Option<f64>,
    #[arg(long)]
    pub fallback_spacing_mm: Option<f64>,
    /// Evaluate a prediction directory marked partial.
    #[arg(long)]
    pub allow_partial: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Service TOML file; `PELVIMARK_*` environment variables override it.
    #[arg(long)]
    pub service_config: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(pelvimark::Error),
    Service(ServiceError),
    /// Some images failed; outputs for the rest were written and marked.
    Partial { kind: ErrorKind, failed: Vec<(String, String)>, marker: PathBuf },
}

impl From<pelvimark::Error> for CliError {
    fn from(e: pelvimark::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Core(c) => CliError::Core(c),
            e => CliError::Service(e),
        }
    }
}

fn kind_name(k: ErrorKind) -> &'static str {
    match k {
        ErrorKind::Validation => "validation",
        ErrorKind::Runtime => "runtime",
        ErrorKind::Backend => "backend",
    }
}

impl CliError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CliError::Usage(_) => ErrorKind::Validation,
            CliError::Core(e) => e.kind(),
            CliError::Service(ServiceError::Config(_)) => ErrorKind::Validation,
            CliError::Service(_) => ErrorKind::Runtime,
            CliError::Partial { kind, .. } => *kind,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 1,
            ErrorKind::Runtime => 2,
            ErrorKind::Backend => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.trim_end().to_string(),
            CliError::Core(e) => e.to_string(),
            CliError::Service(e) => e.to_string(),
            CliError::Partial { failed, .. } => format!("{} image(s) failed; partial output written", failed.len()),
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({ "error": kind_name(self.kind()), "exit_code": self.exit_code(), "message": self.message() });
        if let CliError::Partial { failed, marker, .. } = self {
            v["partial"] = json!({
                "marker": marker.display().to_string(),
                "failed": failed.iter().map(|(id, e)| json!({"image_id": id, "error": e})).collect::<Vec<_>>(),
            });
        }
        v.to_string()
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    // ingest and labels use the global pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Split(a) => commands::split(a, &cfg),
        Command::Labels(a) => commands::labels(a, &cfg),
        Command::Predict(a) => commands::predict(a, &cfg, cli.jobs),
        Command::Evaluate(a) => commands::evaluate(a, &cfg),
        Command::Serve(a) => commands::serve(a),
    }
}
