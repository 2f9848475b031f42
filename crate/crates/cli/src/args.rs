use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "tergm",
    version,
    about = "Temporal exponential random graph models for directed network series"
)]
pub struct Cli {
    /// Worker threads (defaults to the machine's parallelism).
    #[arg(long, global = true, env = "TERGM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a network series from an event log or edge list.
    Ingest(IngestArgs),
    /// Simulate a series from a transition model.
    Simulate(SimulateArgs),
    /// Fit a model to a series.
    Estimate(EstimateArgs),
    /// Degeneracy bounds and exact entropies.
    Entropy(EntropyArgs),
    /// Likelihood-ratio test between two models.
    Test(TestArgs),
    /// Infer unobserved node labels.
    Classify(ClassifyArgs),
    /// Leave-one-transition-out predictive check.
    Assess(AssessArgs),
    /// Parameter-recovery experiment on simulated series.
    Recover(RecoverArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Sampled,
}

#[derive(Args, Debug)]
pub struct SeriesInput {
    /// Series file (dense JSON unless --format says otherwise).
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value = "dense-json")]
    pub format: String,
    /// Label CSV (`node,label[,observed]`) overriding labels in the series.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Drop this many leading networks before fitting.
    #[arg(long, default_value_t = 0)]
    pub drop_prefix: usize,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Sponsorship event log with header `proposal_id,sponsor,cosponsor`.
    #[arg(long, conflicts_with = "edges", required_unless_present = "edges")]
    pub events: Option<PathBuf>,
    /// Edge list with header `t,src,dst`.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, default_value_t = 30)]
    pub step: usize,
    /// Node count; inferred from the data when absent.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub stats: String,
    /// Comma-separated parameter values, one per statistic.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    #[arg(long)]
    pub n: usize,
    /// Number of networks in the series.
    #[arg(long = "T", alias = "length")]
    pub length: usize,
    /// `bernoulli:q` or `self-ergm`.
    #[arg(long, default_value = "bernoulli:0.1")]
    pub init: String,
    /// Label CSV, required by label-dependent statistics.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Gibbs sweeps between networks for non-factorized statistics.
    #[arg(long, default_value_t = 10)]
    pub burn_in: usize,
    /// Gibbs sweeps for self-ERGM first networks.
    #[arg(long, default_value_t = 1000)]
    pub initial_burn_in: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: SeriesInput,
    #[arg(long)]
    pub stats: String,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    /// Fit configuration: inline JSON or a JSON file.
    #[arg(long)]
    pub config: Option<String>,
    /// Seed for the sampled method (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EntropyArgs {
    #[arg(long)]
    pub stats: String,
    /// Single parameter vector: report bounds (and exact entropy when feasible).
    #[arg(
        long,
        allow_hyphen_values = true,
        conflicts_with = "theta_grid",
        required_unless_present = "theta_grid"
    )]
    pub theta: Option<String>,
    /// `lo:hi:steps` grid over (D, S); writes a CSV of exact entropies.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_grid: Option<String>,
    #[arg(long)]
    pub n: usize,
    /// Law of the first network, `bernoulli:q`.
    #[arg(long, default_value = "bernoulli:0.5")]
    pub init: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: SeriesInput,
    #[arg(long)]
    pub null_stats: String,
    #[arg(long)]
    pub alt_stats: String,
    /// Genetic search configuration: inline JSON or a JSON file.
    #[arg(long)]
    pub ga_config: Option<String>,
    /// Fit configuration for every refit: inline JSON or a JSON file.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: SeriesInput,
    #[arg(long, default_value = "S,WD,BD,WR,BR")]
    pub stats: String,
    /// Label-inference configuration: inline JSON or a JSON file.
    #[arg(long)]
    pub config: Option<String>,
    /// Label CSV with the true labels of every node, used only to score accuracy.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AssessArgs {
    #[command(flatten)]
    pub input: SeriesInput,
    #[arg(long)]
    pub stats: String,
    /// Networks drawn per held-out transition.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    /// Fit configuration: inline JSON or a JSON file.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the band table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    /// Nodes per network [default: 100].
    #[arg(long)]
    pub n: Option<usize>,
    /// Transitions per simulated series [default: 11].
    #[arg(long = "T")]
    pub transitions: Option<usize>,
    /// Independent replications [default: 10].
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Full experiment configuration: inline JSON or a JSON file. Flags override it.
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
