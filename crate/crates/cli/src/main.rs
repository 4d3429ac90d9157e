//! `nirec`: preprocess, build-graph, train, evaluate, analyze.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime error.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use pipeline::{required_artifacts, Layout};

#[derive(Parser)]
#[command(name = "nirec", version, about = "Knowledge-enhanced neighborhood interaction recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize/filter interactions and split them into train/validation/test.
    Preprocess(Common),
    /// Build the interaction graph, optionally merged with the knowledge graph.
    BuildGraph(Common),
    /// Train a model and write its checkpoint and run manifest.
    Train(Common),
    /// AUC/ACC on the test split, plus top-N precision/recall/F1.
    Evaluate(Common),
    /// Entropy histogram of pair weight matrices and per-pair case dumps.
    Analyze(Common),
    /// Print the effective configuration.
    ShowConfig(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set model.encoder=gat`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Validation(Vec<String>),
    Runtime(anyhow::Error),
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (stage, common) = match &cli.command {
        Command::Preprocess(c) => ("preprocess", c),
        Command::BuildGraph(c) => ("build-graph", c),
        Command::Train(c) => ("train", c),
        Command::Evaluate(c) => ("evaluate", c),
        Command::Analyze(c) => ("analyze", c),
        Command::ShowConfig(c) => ("show-config", c),
    };
    let cfg = RunConfig::load(common.config.as_deref(), &common.overrides).map_err(Failure::Validation)?;
    let mut problems = match stage {
        "preprocess" => cfg.problems_preprocess(),
        "build-graph" => cfg.problems_graph(),
        "train" => cfg.problems_train(),
        "evaluate" => cfg.problems_evaluate(),
        "analyze" => cfg.problems_evaluate().into_iter().filter(|p| p.starts_with("model")).collect(),
        _ => Vec::new(),
    };
    for p in required_artifacts(&Layout::new(&cfg), stage) {
        if !p.is_file() {
            problems.push(format!("missing {} (run the earlier stages first)", p.display()));
        }
    }
    if !problems.is_empty() {
        return Err(Failure::Validation(problems));
    }
    let result = match stage {
        "preprocess" => pipeline::preprocess(&cfg),
        "build-graph" => pipeline::build_graph(&cfg),
        "train" => pipeline::train(&cfg),
        "evaluate" => pipeline::evaluate(&cfg),
        "analyze" => pipeline::analyze(&cfg),
        _ => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    };
    result.map_err(Failure::Runtime)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(problems)) => {
            for p in problems {
                eprintln!("error: {p}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
