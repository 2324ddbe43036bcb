//! Command-line front end. Each subcommand reads its inputs, writes its
//! outputs into one directory, and records a [`RunManifest`] there.
//!
//! Exit codes: 0 success, 1 input error, 2 pipeline error, 3 validation
//! error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{EvalConfig, LawsConfig, MmcConfig, OverlapConfig, RunConfig};
pub use manifest::{input_digest, RunManifest, MANIFEST_FILE};

use crate::error::Result;

/// Environment variable naming the cache directory. Unset disables caching.
pub const CACHE_ENV: &str = "TRAJ_OVERLAP_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(name = "traj-overlap", version, about = "Trajectory test-train overlap auditing and mobility-law reranking")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Ignore the cache directory.
    #[arg(long, global = true)]
    pub no_cache: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a raw dataset, filter, cut into trajectories and split.
    Preprocess(PreprocessArgs),
    /// Max test-train overlap per test trajectory, and bin fractions.
    Overlap(OverlapArgs),
    /// Markov-chain baseline score files for the validation and test splits.
    Mmc(MmcArgs),
    /// Per-user mobility features and the visitation-law model.
    Features(FeaturesArgs),
    /// ACC@k of score files, overall and per overlap bin.
    Eval(EvalArgs),
    /// Build reranking samples from validation scores and train the scorer.
    RerankTrain(RerankTrainArgs),
    /// Rerank test scores and report the change in ACC@k.
    RerankApply(RerankApplyArgs),
    /// Collect tables and figure data from earlier runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// gowalla, foursquare, taxi-porto, taxi-sf or generic-csv.
    #[arg(long)]
    pub format: String,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub session_gap_hours: Option<f64>,
    #[arg(long)]
    pub min_records: Option<usize>,
    #[arg(long)]
    pub min_trajectories: Option<usize>,
    /// Train, validation and test fractions, e.g. `0.7,0.1,0.2`.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub grid_cell_m: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// Directory written by `preprocess`.
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated subset of js,lcst,ofe.
    #[arg(long)]
    pub metrics: Option<String>,
    /// similarity (default) or distance.
    #[arg(long)]
    pub jaccard: Option<String>,
    /// Scan every training trajectory instead of using the index.
    #[arg(long)]
    pub no_prune: bool,
}

#[derive(Debug, Args)]
pub struct MmcArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Candidates per trajectory; defaults to the vocabulary size.
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Fit gamma on the training split.
    #[arg(long)]
    pub fit_gamma: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// Score files for the test split; repeat for several models.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    /// Directory written by `overlap`, for per-bin accuracy.
    #[arg(long)]
    pub overlap: Option<PathBuf>,
    /// Metrics to stratify by; defaults to all found in `--overlap`.
    #[arg(long)]
    pub stratify: Option<String>,
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerankTrainArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// Base predictor scores for the validation split.
    #[arg(long)]
    pub scores: PathBuf,
    /// Directory written by `features`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RerankApplyArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// Base predictor scores for the test split.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// `scorer.json` from `rerank-train`.
    #[arg(long, required_unless_present = "identity")]
    pub scorer: Option<PathBuf>,
    /// Use the base score unchanged; reranked accuracy equals the base.
    #[arg(long, conflicts_with = "scorer")]
    pub identity: bool,
    #[arg(long)]
    pub overlap: Option<PathBuf>,
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub overlap: Option<PathBuf>,
    /// Directory written by `eval`.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Directories written by `rerank-apply`; repeatable.
    #[arg(long)]
    pub rerank: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command line.
pub fn run(cli: Cli, argv: Vec<String>) -> Result<RunManifest> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    let cache = if cli.no_cache {
        None
    } else {
        std::env::var_os(CACHE_ENV).map(PathBuf::from)
    };
    if cli.threads > 0 {
        // Fails only if a pool already exists, e.g. in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let ctx = commands::Context {
        threads: cli.threads,
        cache,
        argv,
    };
    commands::dispatch(&ctx, &mut config, cli.command)
}

/// Parses `argv`, runs it, and returns the process exit code. Errors are
/// printed to stderr.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli, argv.into_iter().skip(1).collect()) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
