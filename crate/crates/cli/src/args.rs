use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pothole::baselines::BaselineKind;
use pothole::head::{OptimizerKind, TrainingConfig};

#[derive(Debug, Parser)]
#[command(name = "pothole", version, about = "Pothole image classifier on fused frozen-backbone features")]
pub struct Cli {
    /// JSON run configuration; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the procedural road-image dataset.
    Synth(SynthArgs),
    /// Build, split and check image manifests.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Inspect the training augmentation.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Extract fused features for a manifest into a feature store.
    Extract(ExtractArgs),
    /// Train the classifier head on a feature store.
    Train(TrainArgs),
    /// Evaluate a trained head on a labeled feature store.
    Eval(EvalArgs),
    /// Classify images or feature rows with a trained head.
    Predict(PredictArgs),
    /// Train and evaluate comparison classifiers.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Write 2-D embeddings and the feature heatmap.
    #[command(subcommand)]
    Viz(VizCommand),
    /// Throughput benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; images go to `<out>/pothole` and `<out>/normal`.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of pothole images.
    #[arg(long, default_value_t = 450)]
    pub potholes: usize,
    /// Number of normal-road images.
    #[arg(long, default_value_t = 450)]
    pub normals: usize,
    /// Smallest image side in pixels.
    #[arg(long, default_value_t = 240)]
    pub min_size: u32,
    /// Largest image side in pixels.
    #[arg(long, default_value_t = 320)]
    pub max_size: u32,
    /// Manifest path written for the generated images [default: <out>/manifest.jsonl].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Add every decodable image in a directory to a manifest.
    Ingest(IngestArgs),
    /// Assign a stratified train/test split.
    Split(SplitArgs),
    /// Check files, labels and duplicates; exits 1 on any issue.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassArg {
    Pothole,
    Normal,
}

impl ClassArg {
    pub fn label(self) -> u8 {
        match self {
            ClassArg::Pothole => pothole::dataset::POTHOLE,
            ClassArg::Normal => pothole::dataset::NORMAL,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of images of a single class.
    #[arg(long)]
    pub dir: PathBuf,
    /// Class of every image in the directory.
    #[arg(long, value_enum)]
    pub label: ClassArg,
    /// Manifest to write.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Append to the manifest instead of replacing it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Manifest to split.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fraction of each class assigned to the training split.
    #[arg(long, default_value_t = pothole::dataset::DEFAULT_TRAIN_FRAC)]
    pub train_frac: f64,
    /// Split seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the split manifest [default: overwrite the input].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Manifest to check.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Write the verification report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AugmentCommand {
    /// Write a few augmented copies of one image as PNG.
    Preview(PreviewArgs),
}

#[derive(Debug, Args)]
pub struct AugmentFlags {
    /// Largest rotation magnitude in degrees.
    #[arg(long)]
    pub max_rotation: Option<f64>,
    /// Probability of a horizontal flip.
    #[arg(long)]
    pub hflip_prob: Option<f64>,
    /// Augmentation seed.
    #[arg(long)]
    pub augment_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    /// Source image.
    #[arg(long)]
    pub image: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of augmented copies.
    #[arg(long, default_value_t = 8)]
    pub count: u32,
    #[command(flatten)]
    pub augment: AugmentFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorMode {
    /// ONNX backbone graphs from the graph directory.
    Real,
    /// Deterministic grid-mean stand-ins with the same output widths.
    Stub,
}

#[derive(Debug, Args)]
pub struct ExtractorFlags {
    /// Feature extractors to use.
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorMode>,
    /// Directory holding resnet50.onnx, efficientnet.onnx and regnet.onnx.
    #[arg(long)]
    pub graph_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Split manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature store to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Which split to extract: train, test, unassigned or all.
    #[arg(long, default_value = "all")]
    pub split: String,
    #[command(flatten)]
    pub extractor: ExtractorFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    SgdMomentum,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::SgdMomentum => OptimizerKind::SgdMomentum,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// Samples per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Passes over the training store.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Dropout rate on the fused features.
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    /// Initial learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Learning-rate multiplier applied every `--lr-decay-step` steps.
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,
    /// Optimizer steps between learning-rate decays.
    #[arg(long)]
    pub lr_decay_step: Option<u64>,
    /// L2 coefficient on the weights.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Momentum of the sgd-momentum optimizer.
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Weight of the L1 probability term.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Optimizer.
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Initialization, shuffling and dropout seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainingFlags {
    pub fn apply(&self, c: &mut TrainingConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v.into(); })* };
        }
        set!(batch_size, epochs, dropout_rate, learning_rate, lr_decay_factor, lr_decay_step, weight_decay, momentum, lambda1, optimizer, seed);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training feature store.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Held-out feature store evaluated after every epoch.
    #[arg(long)]
    pub test_features: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Write per-epoch losses and accuracies as JSON.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Re-extract augmented training features every epoch (needs --manifest).
    #[arg(long)]
    pub augment: bool,
    /// Split manifest used with --augment.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[command(flatten)]
    pub augment_flags: AugmentFlags,
    #[command(flatten)]
    pub extractor: ExtractorFlags,
}

#[derive(Debug, Args)]
pub struct ReportFlags {
    /// Write the evaluation report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Append a row to this comparison CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Model name used in the comparison CSV.
    #[arg(long)]
    pub name: Option<String>,
    /// Class id treated as positive (0 = pothole, 1 = normal).
    #[arg(long)]
    pub positive_class: Option<u8>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Labeled feature store to evaluate on.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Images to classify.
    #[arg(long, num_args = 1..)]
    pub image: Vec<PathBuf>,
    /// Feature store whose rows are classified instead of images.
    #[arg(long, conflicts_with = "image")]
    pub features: Option<PathBuf>,
    /// Class id whose probability is reported as the score.
    #[arg(long)]
    pub positive_class: Option<u8>,
    #[command(flatten)]
    pub extractor: ExtractorFlags,
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Train a comparison classifier.
    Train(BaselineTrainArgs),
    /// Evaluate a comparison classifier.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineArg {
    LogisticRegression,
    LinearSvm,
    Mlp,
}

impl From<BaselineArg> for BaselineKind {
    fn from(k: BaselineArg) -> Self {
        match k {
            BaselineArg::LogisticRegression => BaselineKind::LogisticRegression,
            BaselineArg::LinearSvm => BaselineKind::LinearSvm,
            BaselineArg::Mlp => BaselineKind::Mlp,
        }
    }
}

#[derive(Debug, Args)]
pub struct BaselineTrainArgs {
    /// Classifier kind.
    #[arg(long, value_enum)]
    pub kind: BaselineArg,
    /// Training feature store.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Passes over the training store.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// L2 coefficient on the weights.
    #[arg(long)]
    pub regularization: Option<f64>,
    /// MLP hidden width.
    #[arg(long)]
    pub hidden_units: Option<usize>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum VizCommand {
    /// Two-component PCA scatter.
    Pca(PcaArgs),
    /// Exact t-SNE scatter.
    Tsne(TsneArgs),
    /// Sample-by-feature heat matrix (PGM, CSV and JSON sidecar).
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    /// Feature store.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output CSV (`x,y,label`); metadata goes next to it as .json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TsneArgs {
    /// Feature store.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output CSV (`x,y,label`); metadata goes next to it as .json.
    #[arg(long)]
    pub out: PathBuf,
    /// Target perplexity.
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    /// Gradient-descent iterations.
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    /// Step size.
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    /// Embedding initialization seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Labeled feature store.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output path stem; .pgm, .csv and .json are written.
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to one backbone's slice (resnet50, efficientnet, regnet).
    #[arg(long)]
    pub backbone: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// End-to-end images per second: decode, standardize, extract, classify.
    Fps(FpsArgs),
}

#[derive(Debug, Args)]
pub struct FpsArgs {
    /// Manifest whose images are timed.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Which split to time: train, test, unassigned or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Untimed leading images.
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    /// Time at most this many images after the warmup.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Spread the timed images over all cores.
    #[arg(long)]
    pub parallel: bool,
    /// Write the benchmark result as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub extractor: ExtractorFlags,
}
