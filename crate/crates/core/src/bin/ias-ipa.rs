use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ias_ipa::config::{load_config, RunConfig};
use ias_ipa::run::{exit_code, run, RunOptions, Verb, EXIT_RUNTIME};

/// IPA gradients and threshold optimization for intermittent androgen suppression.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    verb: Cmd,
    /// JSON run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overrides noise.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel path simulation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit the `# generated_unix=` line from CSV output.
    #[arg(long, global = true)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write trajectory and event CSVs for one path.
    Simulate,
    /// Write the sample cost gradient as JSON, plus the path CSVs.
    Gradient,
    /// Run projected gradient descent on the thresholds.
    Optimize,
    /// Check IPA against finite differences; exit 1 on failure.
    Validate,
    /// Validate and summarize a patient PSA series.
    Ingest {
        /// Patient CSV (falls back to ingest.csv in the config).
        input: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<ias_ipa::Error>()
                .map_or(EXIT_RUNTIME, exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<i32> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let (verb, input) = match cli.verb {
        Cmd::Simulate => (Verb::Simulate, None),
        Cmd::Gradient => (Verb::Gradient, None),
        Cmd::Optimize => (Verb::Optimize, None),
        Cmd::Validate => (Verb::Validate, None),
        Cmd::Ingest { input } => (Verb::Ingest, input),
    };
    let out = cli
        .out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions {
        out,
        seed: cli.seed,
        timestamp: !cli.no_timestamp,
        input,
    };
    let outcome = run(verb, &cfg, &opts)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    Ok(outcome.exit_code())
}
