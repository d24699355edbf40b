use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use superlime::Method;

use crate::config::defaults_help;

#[derive(Parser, Debug)]
#[command(
    name = "superlime",
    version,
    about = "LIME image explanations over interchangeable superpixel segmenters",
    after_help = defaults_help()
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Segment one image; writes <OUT>.labels.png, <OUT>.labels.json and <OUT>.overlay.png.
    Segment(SegmentArgs),
    /// Explain the classifier's decision on one image; writes explanation.json,
    /// mask.png and explained.png into the output directory.
    Explain(ExplainArgs),
    /// Score explanations of a corpus against its reference masks; writes
    /// records.csv and report.json.
    Evaluate(EvaluateArgs),
    /// Grid-search segmenter parameters for the best mean Jaccard; writes
    /// sweep.csv and best.json.
    Sweep(SweepArgs),
    /// Generate a synthetic stained-cell corpus with reference masks.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Default)]
pub struct SegmenterArgs {
    /// Segmentation method: felzenszwalb, quickshift, slic, compact-watershed.
    #[arg(long)]
    pub method: Option<Method>,
    /// Parameter override KEY=VALUE (repeatable); VALUE is parsed as JSON,
    /// falling back to a string.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
}

#[derive(Args, Debug, Default)]
pub struct ClassifierArgs {
    /// `stub` for the builtin classifier or `cmd:<command>` for an external adapter.
    #[arg(long)]
    pub classifier: Option<String>,
    /// Number of classes an external adapter reports.
    #[arg(long)]
    pub class_count: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct PerturbationArgs {
    /// Perturbation pool size N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Surrogate feature count K.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of top positively weighted patches in the mask.
    #[arg(long)]
    pub top: Option<usize>,
    /// Random seed for sampling (and Quick-Shift density jitter).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fill for removed patches: `grey`, `mean` or `R,G,B`.
    #[arg(long)]
    pub replacement: Option<String>,
    /// Proximity kernel width.
    #[arg(long)]
    pub kernel_width: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path prefix.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of: method, params, seed, out.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub perturbation: PerturbationArgs,
    /// Class to explain; defaults to the classifier's decision.
    #[arg(long)]
    pub target: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of: method, params, classifier, perturbation, k, top,
    /// target_class, out.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Directory of <stem>.png images with <stem>.ref.png reference masks.
    pub corpus: PathBuf,
    /// Comma-separated methods; all four when omitted.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Parameter override METHOD.KEY=VALUE (repeatable).
    #[arg(long = "param", value_name = "METHOD.KEY=VALUE")]
    pub params: Vec<String>,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub perturbation: PerturbationArgs,
    /// Verdicts to explain: true-positive, false-negative or all.
    #[arg(long)]
    pub filter: Option<String>,
    /// Class index counted as a positive decision.
    #[arg(long)]
    pub positive_class: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of: methods, params, classifier, evaluation, out.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Directory of <stem>.png images with <stem>.ref.png reference masks.
    pub corpus: PathBuf,
    #[command(flatten)]
    pub segmenter: SegmenterArgs,
    /// Grid axis KEY=V1,V2,... (repeatable; the first axis varies slowest).
    #[arg(long = "grid", value_name = "KEY=V1,V2,...")]
    pub grid: Vec<String>,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[command(flatten)]
    pub perturbation: PerturbationArgs,
    /// Class index counted as a positive decision.
    #[arg(long)]
    pub positive_class: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of: method, params, grid, classifier, evaluation, out.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: Option<usize>,
    /// Image side length in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of: count, size, seed, out.
    #[arg(long)]
    pub config: Option<PathBuf>,
}
