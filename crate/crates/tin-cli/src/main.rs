//! `tin`: train and inspect edge classifiers on bipartite textual
//! interaction networks.
//!
//! Subcommands: `ingest` validates a dataset, `embed` stores its structural
//! embeddings, `verify` checks the structural identities against dense
//! references, `train` fits a model, `eval` scores a checkpoint, and `sweep`
//! tabulates a metric across one config key. Exit code 0 means every check
//! the command ran came out clean.

mod commands;
mod config;
mod dataset;
mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "tin", version, about = "Edge classification on textual interaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a tab-separated dataset, reporting its dimensions.
    Ingest {
        /// Dataset file: user, item, label, text per line.
        #[arg(long)]
        data: PathBuf,
    },
    /// Compute the structural embeddings of a dataset and store them.
    Embed {
        #[arg(long)]
        data: PathBuf,
        /// Directory for distance.emb and centrality.emb.
        #[arg(long)]
        out: PathBuf,
        /// Optional `key = value` run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Embedding width; defaults to svd_dim from the config.
        #[arg(long)]
        k: Option<usize>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the structural identities on a dataset or on random instances.
    ///
    /// Needs dense references, so datasets are limited to 64 interactions.
    Verify {
        /// Dataset to check; without it, random instances are generated.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Stored distance embedding to check in place of a fresh one.
        #[arg(long)]
        dist: Option<PathBuf>,
        /// Stored centrality embedding to check in place of a fresh one.
        #[arg(long)]
        cent: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        /// Number of random instances when no dataset is given.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; write checkpoint, history, and embeddings to --out.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional `key = value` run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Message-passing variant: lga or gau.
        #[arg(long)]
        variant: Option<String>,
        /// Neighborhood sampler: distance, centrality, or random.
        #[arg(long)]
        sampler: Option<String>,
        /// Sampler neighborhood budget.
        #[arg(long)]
        b: Option<usize>,
        /// Ablation: ignore structure and train on text alone.
        #[arg(long)]
        text_only: bool,
    },
    /// Evaluate a stored checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// One of train, val, test, all.
        #[arg(long, default_value = "test")]
        split: String,
        /// Training history; the checkpoint's best row must match the
        /// validation metrics to 1e-12.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Evaluate the text-only path (for models trained with it).
        #[arg(long)]
        text_only: bool,
    },
    /// Train once per value of one config key and tabulate test metrics.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// Config key to vary, e.g. delta.
        #[arg(long)]
        key: String,
        /// Comma-separated values, e.g. 0,0.5,1,1.5,2.
        #[arg(long)]
        values: String,
        /// Output TSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional `key = value` run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        text_only: bool,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let ok = match cli.command {
        Command::Ingest { data } => commands::ingest(&data)?,
        Command::Embed { data, out, config, k, seed } => {
            commands::embed(&data, &out, config.as_deref(), k, seed)?
        }
        Command::Verify { data, dist, cent, tolerance, instances, seed } => {
            verify::run(&verify::VerifyArgs {
                data,
                dist,
                cent,
                tolerance,
                instances,
                seed: seed.unwrap_or(0),
            })?
        }
        Command::Train { data, out, config, seed, variant, sampler, b, text_only } => {
            commands::train_cmd(&commands::TrainArgs {
                data,
                out,
                config,
                overrides: commands::Overrides { seed, variant, sampler, b },
                text_only,
            })?
        }
        Command::Eval { data, checkpoint, split, history, text_only } => {
            commands::eval_cmd(&commands::EvalArgs { data, checkpoint, split, history, text_only })?
        }
        Command::Sweep { data, key, values, out, config, seed, text_only } => {
            commands::sweep_cmd(&commands::SweepArgs {
                data,
                key,
                values,
                out,
                config,
                seed,
                text_only,
            })?
        }
    };
    if !ok {
        std::process::exit(1);
    }
    Ok(())
}
