use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "polvis", version, about = "Images to protest event data: CNN training, face detection, Grad-CAM and event analytics")]
pub struct Cli {
    /// TOML file with defaults (overrides $POLVIS_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-image work.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier on a labelled image manifest.
    Train(TrainArgs),
    /// Top-1 label and probability for one image.
    Classify(ClassifyArgs),
    /// Face boxes in one image as CSV.
    Detect(DetectArgs),
    /// Per-image face counts (and attributes) for a manifest.
    CountFaces(CountFacesArgs),
    /// Importance overlay for one image.
    Gradcam(GradcamArgs),
    /// Bradley-Terry scores from pairwise judgments.
    BtFit(BtFitArgs),
    /// Per-day, per-location series from image annotations.
    Aggregate(AggregateArgs),
    /// Raw and log10 Pearson correlation of a series field with reference sizes.
    Correlate(CorrelateArgs),
    /// Welch t-test of a series field between two groups of days.
    Ttest(TtestArgs),
    /// Lagged OLS with standardized regressors.
    Regress(RegressArgs),
    /// SVG line chart of a series field with Saturday markers.
    Plot(PlotArgs),
    /// Train the synthetic-face detector.
    TrainDetector(TrainDetectorArgs),
    /// Train the female and child attribute networks on synthetic faces.
    TrainAttributes(TrainAttributesArgs),
    /// Write a synthetic corpus: images, manifest, judgments, reference sizes.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Small,
    Deep,
    Binary,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest with `path` and a label column.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    #[arg(long, value_enum, default_value_t = Arch::Small)]
    pub arch: Arch,
    /// Number of classes; defaults to the largest label plus one.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Checkpoint to initialize layers from before training.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Layers copied from --init (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "conv0")]
    pub copy_layers: Vec<String>,
    /// Per-epoch loss and accuracy CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Class names, in label order.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Detector checkpoint.
    #[arg(long)]
    pub detector: PathBuf,
    #[arg(long)]
    pub iou: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Window sides to scan (comma separated); default is the full pyramid.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub scan: ScanArgs,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CountFacesArgs {
    #[command(flatten)]
    pub scan: ScanArgs,
    /// Manifest with `path`, `date`, `location` and optionally `image_id`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding female.idkp and child.idkp.
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Target class; defaults to the predicted one.
    #[arg(long)]
    pub class: Option<usize>,
    /// Average the maps of all convolutional layers.
    #[arg(long)]
    pub all_layers: bool,
    /// Nearest-neighbour instead of bilinear upsampling.
    #[arg(long)]
    pub nearest: bool,
    /// Overlay PPM.
    #[arg(long)]
    pub out: PathBuf,
    /// Raw map values as CSV (row, col, value).
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BtFitArgs {
    #[arg(long)]
    pub comparisons: PathBuf,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub pseudo_count: Option<f64>,
    /// Log-likelihood trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Scores from bt-fit; supplies the violence column.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long, default_value = "face_count")]
    pub field: String,
    /// Only references from this source.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grouping {
    /// Saturdays against all other days.
    Saturday,
    /// Location --a against location --b.
    Location,
}

#[derive(Debug, Args)]
pub struct TtestArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub field: String,
    #[arg(long, value_enum, default_value_t = Grouping::Saturday)]
    pub by: Grouping,
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    /// Restrict to one location (saturday grouping only).
    #[arg(long)]
    pub location: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value = "face_count")]
    pub dv: String,
    /// Regressors (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub iv: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub lag: i64,
    /// Use the outcome as is instead of log10.
    #[arg(long)]
    pub raw: bool,
    /// Keep only outcome days at these locations (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub location: Vec<String>,
    /// Keep only outcome days that are Saturdays.
    #[arg(long)]
    pub saturdays: bool,
    /// Fit metadata (n, df, residual variance, zero-count rows) as JSON.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value = "face_count")]
    pub y: String,
    /// Location to plot; required when the series has several.
    #[arg(long)]
    pub location: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainDetectorArgs {
    #[arg(long, default_value_t = 60)]
    pub images: usize,
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[arg(long, default_value_t = 4)]
    pub feature_step: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainAttributesArgs {
    #[arg(long, default_value_t = 80)]
    pub samples: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub locations: usize,
    #[arg(long, default_value_t = 30)]
    pub days: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}
