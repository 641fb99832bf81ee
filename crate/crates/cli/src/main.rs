//! `simeval`: embedding-similarity evaluation of answers and retrieval runs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or parse
//! error, 3 embedding provider error.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use config::Opts;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "simeval", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Similarity of a target qrel to the other judged passages, per grade.
    ValidateGrades(Opts),
    /// Score answers and runs against the top-tier qrels; correlate with ndcg@10.
    EvalWithQrels(Opts),
    /// Score answers against the top-1 passages of retrieval pipelines.
    EvalNoQrels(Opts),
    /// Embed a text file into the cache and/or export a precomputed store.
    EmbedCache(Opts),
}

type Handler = fn(&config::Effective) -> Result<(), CliError>;

fn run(command: Command) -> Result<(), CliError> {
    let (opts, f): (Opts, Handler) = match command {
        Command::ValidateGrades(o) => (o, commands::validate_grades),
        Command::EvalWithQrels(o) => (o, commands::eval_with_qrels),
        Command::EvalNoQrels(o) => (o, commands::eval_no_qrels),
        Command::EmbedCache(o) => (o, commands::embed_cache),
    };
    let cfg = opts.with_config_file()?.resolve();
    f(&cfg)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("SIMEVAL_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
