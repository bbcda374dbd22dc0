mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "kbforge", version, about = "Crawl knowledge bases out of chat models and measure their stability")]
struct Cli {
    /// Root directory that relative paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    #[command(subcommand)]
    command: Command,
}

/// Flat overrides layered on top of the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct RunFlags {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topic: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_layers: Option<u32>,
    #[arg(long)]
    max_wall_seconds: Option<u64>,
    #[arg(long)]
    max_triples: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Use the offline mock backend with this world file.
    #[arg(long)]
    world: Option<PathBuf>,
    /// OpenAI-compatible base URL for the remote backend.
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one crawl and store it as a run directory.
    Crawl {
        #[command(flatten)]
        flags: RunFlags,
        /// Run directory to create (default: runs/<run-id>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Run every configuration of a suite file.
    Suite {
        /// Suite JSON file.
        #[arg(long)]
        suite: PathBuf,
        /// Suite directory to create.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Compare the runs of a suite and write report.json / report.csv.
    Compare {
        /// Suite directory.
        #[arg(long)]
        suite: PathBuf,
        /// Comma-separated categories (ne, lit, pred, cls, tri) or "all".
        #[arg(long, default_value = "ne")]
        categories: String,
        #[arg(long, default_value_t = kbforge_core::metrics::DEFAULT_TAU)]
        tau: f64,
        /// Embedding provider: "offline" or "remote:<model>".
        #[arg(long, default_value = "offline")]
        provider: String,
        #[arg(long)]
        embedding_endpoint: Option<String>,
        /// Add per-popularity-bucket rows for named entities.
        #[arg(long)]
        buckets: bool,
        /// Popularity lookups use the cache only.
        #[arg(long)]
        offline: bool,
        /// Wikidata API URL (for testing against a fixture server).
        #[arg(long)]
        wikidata_api: Option<String>,
        /// Report directory (default: the suite directory's report/).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep triples found in at least k runs.
    Ensemble {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, conflicts_with = "auto", required_unless_present = "auto")]
        k: Option<usize>,
        /// Choose k with the elbow of the shared-triple curve.
        #[arg(long)]
        auto: bool,
        /// Output directory (default: <suite>/ensemble-k<k>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a run or ensemble KB in release formats.
    Export {
        /// Run or ensemble directory holding triples.ndjson.
        #[arg(long)]
        kb: PathBuf,
        /// Comma-separated: csv, sql, ttl, html.
        #[arg(long, default_value = "csv,sql,ttl,html")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = kbforge_core::export::DEFAULT_BASE_NAMESPACE)]
        base_namespace: String,
    },
    /// Resolve a run's named entities on Wikidata and bucket them.
    Popularity {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        offline: bool,
        #[arg(long)]
        wikidata_api: Option<String>,
        /// Output JSON file (default: popularity/<run-id>.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let ws = cli.workspace.clone();
    let result = match cli.command {
        Command::Crawl { flags, out, run_id } => commands::crawl(&ws, &flags, out, run_id),
        Command::Suite { suite, out, flags } => commands::suite(&ws, &suite, &out, &flags),
        Command::Compare {
            suite,
            categories,
            tau,
            provider,
            embedding_endpoint,
            buckets,
            offline,
            wikidata_api,
            out,
        } => commands::compare(
            &ws,
            &commands::CompareArgs {
                suite,
                categories,
                tau,
                provider,
                embedding_endpoint,
                buckets,
                offline,
                wikidata_api,
                out,
            },
        ),
        Command::Ensemble { suite, k, auto, out } => commands::ensemble(&ws, &suite, k, auto, out),
        Command::Export {
            kb,
            format,
            out,
            base_namespace,
        } => commands::export(&ws, &kb, &format, &out, &base_namespace),
        Command::Popularity {
            run,
            offline,
            wikidata_api,
            out,
        } => commands::popularity(&ws, &run, offline, wikidata_api, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
