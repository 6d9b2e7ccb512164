use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use smell::data::LabelColumn;
use smell::datasets::SynthKind;
use smell::eval::MetricKind;

#[derive(Debug, Parser)]
#[command(name = "smell", version, about = "Metric learning in a pairwise similarity space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write a checkpoint, training log and manifest.
    Train(TrainArgs),
    /// 10-fold cross-validated KNN-3 accuracy per dataset and method.
    Eval(EvalArgs),
    /// Cross-validate the five regularization ablations.
    Ablate(AblateArgs),
    /// Write latent vectors, sampled S-space vectors and markers of a checkpoint.
    Export(ExportArgs),
    /// Audit the closed-form misclassification risk against numerical integration.
    Risk(RiskArgs),
    /// Generate a seeded synthetic or bundled dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset CSV file (repeatable).
    #[arg(long = "data")]
    pub data: Vec<PathBuf>,
    /// Directory whose *.csv files are evaluated in name order.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Bundled dataset: iris or monk2 (repeatable).
    #[arg(long)]
    pub builtin: Vec<String>,
    /// Label column: `last` or a zero-based index.
    #[arg(long, default_value = "last")]
    pub label_col: LabelColumn,
    /// The first CSV line is a header.
    #[arg(long)]
    pub has_header: bool,
}

/// Configuration file plus per-field overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON training configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub r_hc: Option<f64>,
    #[arg(long)]
    pub r_d: Option<f64>,
    #[arg(long)]
    pub r_r: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub positive_markers: Option<usize>,
    #[arg(long)]
    pub negative_markers: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub joint_epochs: Option<usize>,
    /// Stratified downsampling fraction in (0, 1].
    #[arg(long)]
    pub downsample: Option<f64>,
    #[arg(long)]
    pub zero_r_r: bool,
    #[arg(long)]
    pub zero_r_d: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Hold out this fold (0-9); by default every row is used.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated methods: smell, smell_euclidean, raw_euclidean.
    #[arg(long, value_delimiter = ',', default_value = "smell,smell_euclidean,raw_euclidean")]
    pub methods: Vec<MetricKind>,
    /// Take the training configuration from a checkpoint; folds are still retrained.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Append a two-component PCA projection to the S-space vectors.
    #[arg(long)]
    pub pca2: bool,
    /// Seed of the exported pair sample.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    #[arg(long, requires = "dminus", conflicts_with = "grid")]
    pub dplus: Option<f64>,
    #[arg(long, requires = "dplus", conflicts_with = "grid")]
    pub dminus: Option<f64>,
    /// Evaluate the 5 x 5 grid with both distances in {0, 0.5, 1, 2, 5}.
    #[arg(long)]
    pub grid: bool,
    /// Absolute tolerance of the numerical integration.
    #[arg(long, default_value_t = smell::theory::DEFAULT_TOL)]
    pub tol: f64,
    /// Output CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthTarget {
    Generated(SynthKind),
    Iris,
    Monk2,
}

impl std::str::FromStr for SynthTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iris" => Ok(Self::Iris),
            "monk2" => Ok(Self::Monk2),
            other => other.parse().map(Self::Generated),
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// two-gaussians, disjoint-regions, ring-vs-disk, iris or monk2.
    #[arg(long)]
    pub kind: SynthTarget,
    #[arg(long, default_value_t = 300)]
    pub rows: usize,
    /// Cluster separation in units of the cluster spread.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_dims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
