use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "latentgraph", version, about = "Latent covariance tests and graphs for multivariate GLMMs")]
pub struct Cli {
    /// Random seed; falls back to LATENTGRAPH_SEED, then to 0 or the config seed.
    #[arg(long, global = true, env = "LATENTGRAPH_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a model spec.
    Simulate(SimulateArgs),
    /// Predict cluster random components from a long dataset.
    Predict(PredictArgs),
    /// Estimate the covariance of the random components.
    EstimateCov(EstimateArgs),
    /// Test block un-correlation on a covariance estimate.
    Test(TestArgs),
    /// Build an independence graph from pairwise edge tests.
    Graph(GraphArgs),
    /// Run a size/power simulation study.
    PowerStudy(StudyArgs),
    /// Kolmogorov–Smirnov uniformity check of p-values with a QQ plot.
    Uniformity(UniformityArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output CSV; the latent truth goes next to it as <stem>.truth.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Long dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Margin families and links: a JSON list, or a model spec with "margins".
    #[arg(long)]
    pub margins: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovMethod {
    Sample,
    MlGaussian,
    MlElliptical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DivisorArg {
    #[value(name = "q-1")]
    QMinus1,
    Q,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Predictions CSV, or a long dataset CSV together with --margins.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub margins: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sample")]
    pub method: CovMethod,
    #[arg(long, value_enum, default_value = "q-1")]
    pub divisor: DivisorArg,
    /// Generator for ml-elliptical: gaussian or t.
    #[arg(long, default_value = "gaussian")]
    pub family: String,
    /// Degrees of freedom for the t generator.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Gauss–Hermite nodes per axis for ml-elliptical.
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Gaussian,
    Elliptical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Mc,
    Series,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionArg {
    None,
    Holm,
    Bonferroni,
}

#[derive(Debug, Args)]
pub struct KappaSource {
    /// Kurtosis parameter for the elliptical test.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Data (predictions or numeric CSV) from which to estimate the kurtosis.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Covariance JSON.
    #[arg(long)]
    pub cov: PathBuf,
    /// Tested block sizes, e.g. "1,1".
    #[arg(long)]
    pub blocks: String,
    /// 1-based coordinates of the tested blocks in order; default leading.
    #[arg(long)]
    pub coords: Option<String>,
    /// "rest", "none" or 1-based indices such as "2,4".
    #[arg(long, default_value = "rest")]
    pub condition: String,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "mc")]
    pub engine: EngineArg,
    /// Number of clusters; defaults to the covariance file's q.
    #[arg(long)]
    pub q: Option<usize>,
    #[command(flatten)]
    pub kappa: KappaSource,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    Figure2,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Covariance JSON to build the graph from.
    #[arg(long, conflicts_with = "fixture")]
    pub cov: Option<PathBuf>,
    /// Bundled example chain graph instead of a covariance.
    #[arg(long, value_enum)]
    pub fixture: Option<Fixture>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "holm")]
    pub correction: CorrectionArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "mc")]
    pub engine: EngineArg,
    #[arg(long)]
    pub q: Option<usize>,
    #[command(flatten)]
    pub kappa: KappaSource,
    /// Add responses and emit the block chain graph.
    #[arg(long)]
    pub bcg: bool,
    /// Emit the moral graph of the block chain graph.
    #[arg(long)]
    pub moral: bool,
    /// DOT output path.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// JSON output path (graph plus p-values).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Rates CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Per-replicate p-values CSV.
    #[arg(long)]
    pub pvalues: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct UniformityArgs {
    /// CSV with a 'pvalue' column or a single column.
    #[arg(long)]
    pub input: PathBuf,
    /// Keep only rows with column=value; repeatable.
    #[arg(long = "filter")]
    pub filters: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}
