//! `sheetdist`: generate or ingest a spreadsheet corpus, embed it, compute
//! sheet distances, cluster and evaluate. Each stage leaves its artifacts in
//! the output directory for the next one.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sheetdist::aggregate::Aggregator;
use sheetdist::metric::{SpatialNorm, Weights};
use sheetdist::synthgen::Preset;
use sheetdist::typing::TypeGranularity;

use config::{PartialConfig, Provider, RunConfig, PROVIDER_ENV};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Pipeline(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sheetdist", version, about = "Structural similarity and template clustering for spreadsheets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Settings shared by every stage. Each overrides the same key of the
/// config file.
#[derive(Debug, Args)]
struct Common {
    /// Config file [default: ./sheetdist.json if present]
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Corpus root: one subdirectory of CSV files per family
    #[arg(long, global = true, value_name = "DIR")]
    corpus_dir: Option<PathBuf>,
    /// Directory for stage artifacts
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Spatial, type and semantic weights, summing to 1
    #[arg(long, global = true, value_name = "S,T,M")]
    weights: Option<Weights>,
    /// chamfer or hausdorff
    #[arg(long, global = true)]
    aggregator: Option<Aggregator>,
    /// Number of clusters [default: number of families]
    #[arg(long, global = true)]
    k: Option<usize>,
    /// `hash` or `http:<url>`
    #[arg(long, global = true)]
    provider: Option<Provider>,
    /// Embedding dimension
    #[arg(long, global = true)]
    dimension: Option<usize>,
    /// pair or corpus
    #[arg(long, global = true)]
    spatial_norm: Option<SpatialNorm>,
    /// code or name
    #[arg(long, global = true)]
    type_granularity: Option<TypeGranularity>,
    /// Worker threads for the parallel stages; 0 uses every core
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Weight grid spacing for `sweep`; must divide 1
    #[arg(long, global = true)]
    sweep_step: Option<f64>,
}

impl Common {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            corpus_dir: self.corpus_dir.clone(),
            output_dir: self.output_dir.clone(),
            weights: self.weights,
            aggregator: self.aggregator,
            k: self.k,
            provider: self.provider.clone(),
            dimension: self.dimension,
            spatial_norm: self.spatial_norm,
            type_granularity: self.type_granularity,
            workers: self.workers,
            seed: self.seed,
            sweep_step: self.sweep_step,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a labeled synthetic corpus to the corpus directory
    Generate {
        /// separable or jittered
        #[arg(long, default_value = "separable")]
        preset: Preset,
        /// Sheets per family
        #[arg(long, default_value_t = 19)]
        per_family: usize,
        /// JSON list of template specs replacing the built-in families
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
    },
    /// Embed every cell of the corpus into the on-disk cache
    Embed,
    /// Compute the sheet distance matrix (embeds as needed)
    Distmat,
    /// Cluster the distance matrix with k-medoids
    Cluster,
    /// Score the clustering against the family labels
    Eval,
    /// Evaluate every weight combination on a grid over the simplex
    Sweep,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let env = std::env::var(PROVIDER_ENV).ok();
    let cfg = RunConfig::resolve(cli.common.config.as_deref(), env, cli.common.partial())?;
    match cli.command {
        Command::Generate {
            preset,
            per_family,
            spec,
        } => commands::generate(
            &cfg,
            &commands::GenerateArgs {
                preset,
                per_family,
                spec,
            },
        ),
        Command::Embed => commands::embed(&cfg),
        Command::Distmat => commands::distmat(&cfg),
        Command::Cluster => commands::cluster(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Sweep => commands::sweep(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
