//! `radeval`: the report-pair curation, estimator training and metric
//! validation pipeline.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "radeval", version, about = "Curate report-pair corpora, train and validate a referenceless report-quality metric")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(short, long, global = true, default_value = "radeval.toml")]
    config: PathBuf,
    /// Overrides `run_dir` from the config.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Overrides the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Clean MeSH labels and classify reports as normal or abnormal.
    Curate,
    /// Vectorize MeSH labels, pick k by Calinski-Harabasz, project to 2-D.
    Cluster,
    /// Score report pairs within clusters; build best-match and top-decile corpora.
    Pairs,
    /// Stratified train/validation/test split of the chosen corpus.
    Split,
    /// Train the estimator head and select the max-tau checkpoint.
    Train,
    /// Score generated reports against their ground truth.
    Score,
    /// Metric-metric, metric-human and per-oracle correlation tables.
    Correlate,
    /// Dependent overlapping correlation tests, RadEval against RadCliQ.
    Sigtest,
    /// Run every stage in order.
    All,
}

/// 1 for failed computations, 2 for unreadable or malformed inputs.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<radeval_core::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
        if cause.is::<commands::InputError>()
            || cause.is::<std::io::Error>()
            || cause.is::<toml::de::Error>()
            || cause.is::<csv::Error>()
            || cause.is::<serde_json::Error>()
        {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = config::PipelineConfig::load(&cli.config).and_then(|mut cfg| {
        if let Some(dir) = cli.run_dir {
            cfg.run_dir = dir;
        }
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        let ctx = commands::Context::new(cfg)?;
        match cli.command {
            Command::Curate => commands::curate(&ctx),
            Command::Cluster => commands::cluster(&ctx),
            Command::Pairs => commands::pairs(&ctx),
            Command::Split => commands::split(&ctx),
            Command::Train => commands::train(&ctx),
            Command::Score => commands::score(&ctx),
            Command::Correlate => commands::correlate(&ctx),
            Command::Sigtest => commands::sigtest(&ctx),
            Command::All => commands::all(&ctx),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
