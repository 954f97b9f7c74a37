use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "erval", version, about = "Evaluate entity resolution from sampled ground-truth clusters")]
pub struct Cli {
    /// Worker threads. Defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print human-readable tables instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summary statistics of a clustering, a release series, or estimated
    /// from a benchmark sample.
    Stats(StatsArgs),
    /// Performance estimates from a benchmark sample or an error table.
    Estimate(EstimateArgs),
    /// Draw a cluster sample or start a labeling session.
    Sample(SampleArgs),
    /// Monte-Carlo study of estimator bias, RMSE and coverage.
    Simulate(SimulateArgs),
    /// Quality-control report for a labeling session journal.
    Qc(QcArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Weighted frequencies of audit tags.
    AuditReport(AuditArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["membership", "series", "truth_sample"])))]
pub struct StatsArgs {
    /// Membership CSV (`record_id,cluster_id`).
    #[arg(long)]
    pub membership: Option<PathBuf>,
    /// Directory of membership CSVs, one per release, ordered by file name.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Benchmark JSONL to estimate ground-truth statistics from.
    #[arg(long)]
    pub truth_sample: Option<PathBuf>,
    /// Attribute CSV (`record_id,label,...`) for label-based rates.
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// Hill orders, e.g. `0,0.5,1,2,inf`.
    #[arg(long)]
    pub hill_grid: Option<String>,
    /// File of record ids, one per line; statistics are computed on this
    /// subset only.
    #[arg(long, conflicts_with = "truth_sample")]
    pub subset: Option<PathBuf>,
    /// Statistics to estimate with --truth-sample.
    #[arg(long, default_value = "avg_size,matching_rate", requires = "truth_sample")]
    pub estimate: String,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Weights {
    /// Use the `p_c` stored with each draw.
    File,
    /// `p_c = |c| / N`.
    #[value(name = "cluster_size")]
    ClusterSize,
    /// `p_c = 1`.
    Uniform,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["error_table", "truth_sample"])))]
pub struct EstimateArgs {
    /// Error table CSV.
    #[arg(long)]
    pub error_table: Option<PathBuf>,
    /// Benchmark JSONL of sampled true clusters.
    #[arg(long, requires = "prediction")]
    pub truth_sample: Option<PathBuf>,
    /// Predicted membership CSV.
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Weights::File)]
    pub weights: Weights,
    /// Comma-separated metrics, or `all`.
    #[arg(long, default_value = "all")]
    pub metrics: String,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Clamp reported points into [0, 1].
    #[arg(long)]
    pub clamp: bool,
    /// Design name recorded for an error table.
    #[arg(long, default_value = "external", requires = "error_table")]
    pub design: String,
    /// `N` for cluster metrics when no prediction is given.
    #[arg(long)]
    pub n_records: Option<usize>,
    /// Number of predicted clusters for cluster metrics when no prediction
    /// is given.
    #[arg(long)]
    pub n_pred_clusters: Option<usize>,
    /// Also write the error table.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Membership CSV to sample from.
    #[arg(long)]
    pub membership: PathBuf,
    /// `pps_record`, `uniform_cluster` or `expected_error`.
    #[arg(long, default_value = "pps_record")]
    pub design: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pairwise match probabilities (`record_a,record_b,p`) for the
    /// expected-error design.
    #[arg(long)]
    pub match_probs: Option<PathBuf>,
    /// Benchmark JSONL output. Defaults to stdout.
    #[arg(long, conflicts_with = "session")]
    pub out: Option<PathBuf>,
    /// Start a labeling session with this id instead of writing a sample.
    #[arg(long, requires = "data_dir")]
    pub session: Option<String>,
    /// Journal directory of the labeling service.
    #[arg(long, requires = "session")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("population").required(true).args(["truth", "generate"])))]
pub struct SimulateArgs {
    /// True membership CSV.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Generate a synthetic person population.
    #[arg(long)]
    pub generate: bool,
    /// Predicted membership CSV. Without it the all-but-one matcher runs.
    #[arg(long, conflicts_with = "matcher")]
    pub prediction: Option<PathBuf>,
    #[arg(long, value_parser = ["all-but-one"])]
    pub matcher: Option<String>,
    /// Attribute CSV for the matcher when --truth is given.
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// Match without blocking (at most 20,000 records).
    #[arg(long)]
    pub exact: bool,
    /// Per-field corruption rate of generated duplicates.
    #[arg(long, default_value_t = 0.1)]
    pub corruption: f64,
    #[arg(long, default_value_t = 1000)]
    pub n_pairs: usize,
    #[arg(long, default_value_t = 8000)]
    pub n_singletons: usize,
    /// Seed of the generated population; --seed drives the sampling.
    #[arg(long, default_value_t = 0)]
    pub population_seed: u64,
    /// Write the generated population (truth, prediction, attributes) here.
    #[arg(long, requires = "generate")]
    pub save_population: Option<PathBuf>,
    #[arg(long, default_value = "pps_record,uniform_cluster")]
    pub designs: String,
    #[arg(long, default_value = "200,400,800")]
    pub sizes: String,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value = "pairwise_precision,pairwise_recall")]
    pub metrics: String,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON output. Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tidy CSV, one row per metric, design and size.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Checkpoint file; an interrupted run resumes from it.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QcArgs {
    /// Session journal (JSONL).
    #[arg(long)]
    pub journal: PathBuf,
    /// Snapshot to start replay from.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Attribute CSV for the soft checks.
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// Flag additions outside the seed's block (first label token).
    #[arg(long)]
    pub blocking_key: bool,
    /// Do not flag additions without a shared label token.
    #[arg(long)]
    pub no_token_overlap: bool,
    /// Exit with status 1 when any hard flag is raised.
    #[arg(long)]
    pub strict: bool,
    /// Write the finalized clusters as benchmark JSONL.
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory of session journals.
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Predicted membership CSV.
    #[arg(long)]
    pub prediction: PathBuf,
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// Benchmark JSONL served by /estimates.
    #[arg(long)]
    pub truth_sample: Option<PathBuf>,
    /// Prediction identifier recorded in new sessions. Defaults to the file
    /// name.
    #[arg(long)]
    pub snapshot_id: Option<String>,
    #[arg(long)]
    pub blocking_key: bool,
    /// Run without a bearer token.
    #[arg(long)]
    pub insecure_no_auth: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["tags", "journal"])))]
pub struct AuditArgs {
    /// Tags CSV (`cluster_id,direction,label,note,p_c`).
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// Session journal holding the tags.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Also write the tags as CSV.
    #[arg(long)]
    pub tags_out: Option<PathBuf>,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}
