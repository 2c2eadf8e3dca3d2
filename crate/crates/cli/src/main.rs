//! `taskgen`: batch front end for the partition pipeline.
//!
//! Subcommands: `partition`, `sweep`, `analyze-tree`, `project`,
//! `episode-eval`, `synth`, `divergence`. Every run prints its resolved
//! configuration, takes all randomness from `--seed`, and writes output
//! files atomically (temp file + rename).
//!
//! Exit codes: 0 success, 2 invalid arguments or parameters, 3 unreadable
//! or malformed input files, 4 numeric failure (non-finite objective,
//! singular covariance).

mod commands;
mod files;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "taskgen",
    version,
    about = "Generate few-shot class partitions of controllable transfer difficulty",
    after_help = "Exit codes: 0 ok, 2 bad arguments, 3 input parse errors, 4 numeric failure."
)]
struct Cli {
    /// Worker threads for data-parallel loops (default: all cores).
    /// Results do not depend on the thread count.
    #[arg(long, global = true, env = "TASKGEN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OptimizerArgs {
    /// Penalty weight lambda.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,

    /// SGD learning rate.
    #[arg(long, default_value_t = 0.1)]
    lr: f64,

    /// SGD momentum, in [0, 1).
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,

    /// Full-batch optimizer iterations.
    #[arg(long, default_value_t = 7000)]
    iterations: usize,

    /// Penalty divergence between the train and test distributions.
    #[arg(long, default_value = "symkl", value_parser = ["symkl", "kl"])]
    divergence: String,

    /// Fraction of classes assigned to the train split.
    #[arg(long = "train-fraction", default_value_t = 0.6)]
    train_fraction: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the two centroids and write the train/validation/test split.
    Partition {
        /// Sample embeddings (CSV or ATGE binary; detected by content).
        #[arg(long)]
        embeddings: String,

        /// Target divergence R in nats.
        #[arg(long = "target-divergence")]
        target_divergence: f64,

        #[command(flatten)]
        optimizer: OptimizerArgs,

        /// Assignment rule: fractional top-60% split or the sign-of-ratio rule.
        #[arg(long, default_value = "fraction", value_parser = ["fraction", "ratio"])]
        rule: String,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Output partition JSON.
        #[arg(long)]
        out: String,

        /// Also write the optimized centroid pair as JSON.
        #[arg(long = "centroids-out")]
        centroids_out: Option<String>,
    },

    /// Partition at each target divergence in a grid and evaluate episode
    /// accuracy on the test split; writes plot-ready CSV.
    Sweep {
        #[arg(long)]
        embeddings: String,

        /// Comma-separated target divergences.
        #[arg(long, default_value = "0.04,0.32,0.64,0.96")]
        grid: String,

        /// Episodes per grid point per seed.
        #[arg(long, default_value_t = 200)]
        episodes: usize,

        #[arg(long, default_value_t = 5)]
        way: usize,

        #[arg(long, default_value_t = 5)]
        shot: usize,

        #[arg(long, default_value_t = 15)]
        query: usize,

        /// Number of seeds (seed, seed+1, ...) averaged per grid point.
        #[arg(long, default_value_t = 5)]
        seeds: usize,

        #[command(flatten)]
        optimizer: OptimizerArgs,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        #[arg(long)]
        out: String,
    },

    /// Ward-cluster the class embeddings; optionally compare the tree
    /// against an external class graph by hop distance.
    AnalyzeTree {
        #[arg(long)]
        embeddings: String,

        /// External graph as node_a<TAB>node_b lines.
        #[arg(long, requires = "targets")]
        graph: Option<String>,

        /// JSON map from class id to graph node name.
        #[arg(long, requires = "graph")]
        targets: Option<String>,

        /// Report JSON (merge tree, per-pair and mean hop distance).
        #[arg(long)]
        out: String,

        /// Also write the clustering tree's own graph as an edge list.
        #[arg(long = "emit-graph")]
        emit_graph: Option<String>,
    },

    /// PCA-project the class means (optionally overlaying the centroids).
    Project {
        #[arg(long)]
        embeddings: String,

        /// Centroid pair JSON from `partition --centroids-out`.
        #[arg(long)]
        centroids: Option<String>,

        /// Number of principal components.
        #[arg(short, default_value_t = 2)]
        k: usize,

        /// Project raw class means (default unit-normalizes them first,
        /// matching the space the centroids are optimized in).
        #[arg(long)]
        raw: bool,

        #[arg(long)]
        out: String,
    },

    /// Prototype-classifier accuracy of episodes drawn from one split.
    EpisodeEval {
        #[arg(long)]
        embeddings: String,

        /// Partition JSON produced by `partition`.
        #[arg(long)]
        partition: String,

        #[arg(long, default_value = "test", value_parser = ["train", "validation", "test"])]
        split: String,

        #[arg(long, default_value_t = 5)]
        way: usize,

        #[arg(long, default_value_t = 5)]
        shot: usize,

        #[arg(long, default_value_t = 15)]
        query: usize,

        #[arg(long, default_value_t = 200)]
        episodes: usize,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Optional one-row CSV with the aggregate numbers.
        #[arg(long)]
        out: Option<String>,
    },

    /// Generate a synthetic embedding table with known supercluster labels.
    Synth {
        #[arg(long)]
        classes: usize,

        #[arg(long)]
        dim: usize,

        /// Samples per class.
        #[arg(long)]
        samples: usize,

        #[arg(long, default_value_t = 1)]
        superclusters: usize,

        #[arg(long = "sigma-within", default_value_t = 0.5)]
        sigma_within: f64,

        #[arg(long = "sigma-between", default_value_t = 1.0)]
        sigma_between: f64,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Output table; `.csv` writes CSV, anything else the binary format.
        #[arg(long)]
        out: String,

        /// Class id -> supercluster id map as JSON.
        #[arg(long = "ground-truth")]
        ground_truth: Option<String>,
    },

    /// Closed-form divergence between Gaussian summaries of two embedding
    /// files' class means. KL is directed a||b; swap the files for the
    /// other direction. Wasserstein-2 reports the squared distance.
    Divergence {
        #[arg(long)]
        a: String,

        #[arg(long)]
        b: String,

        #[arg(long, default_value = "symkl", value_parser = ["euclid", "w2", "kl", "symkl"])]
        kind: String,

        /// Diagonal damping added to both covariances.
        #[arg(long, default_value_t = 0.001)]
        damping: f64,
    },
}

/// A failure with its documented exit code.
pub(crate) struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<taskgen_core::Error> for Failure {
    fn from(err: taskgen_core::Error) -> Self {
        use taskgen_core::Error::*;
        let code = match &err {
            NoSamples | MalformedRow { .. } | InconsistentWidth { .. }
            | NonFiniteValue { .. } | MalformedBinary { .. } | Io(_) | ZeroNorm { .. }
            | ClassIdMismatch | MissingGraphNode { .. } | UnreachablePair { .. }
            | InsufficientSamples { .. } | TooFewClasses { .. } | NotNormalized => 3,
            NonFiniteObjective { .. } | SingularCovariance => 4,
            DimensionMismatch { .. } | InvalidPenaltyDivergence { .. }
            | InvalidParameter(_) => 2,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure {
            code: 3,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        // Ignore the error if a pool already exists (e.g. repeated init in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
