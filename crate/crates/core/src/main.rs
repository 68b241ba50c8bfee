use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use realsim::pipeline::{run_pipeline, RunConfig, StagesConfig};

#[derive(Parser)]
#[command(
    name = "realsim",
    about = "Measures how realistic simulated chatbot users are, comparing real \
and simulated dialogue corpora along eight behavioral dimensions."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract one-line task scenarios from the real dialogues.
    Scenarios(StageArgs),
    /// Generate candidate personas for each scenario.
    Personas(StageArgs),
    /// Run simulated user-vs-assistant conversations.
    Simulate(StageArgs),
    /// Annotate dialogues along the configured dimensions.
    Annotate(StageArgs),
    /// Compute distribution comparisons from existing bundles.
    Compare(StageArgs),
    /// Write the report directory from existing bundles.
    Report(StageArgs),
    /// Run all enabled stages in order.
    Run(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Path to the run configuration (TOML).
    #[arg(long, default_value = "run.toml")]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Resume: skip work already persisted in the work directory.
    #[arg(long)]
    resume: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match &cli.command {
        Command::Scenarios(a) => (Some("scenarios"), a),
        Command::Personas(a) => (Some("personas"), a),
        Command::Simulate(a) => (Some("simulate"), a),
        Command::Annotate(a) => (Some("annotate"), a),
        Command::Compare(a) => (Some("compare"), a),
        Command::Report(a) => (Some("report"), a),
        Command::Run(a) => (None, a),
    };

    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("fatal: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(stage) = stage {
        cfg.stages = StagesConfig {
            scenarios: stage == "scenarios",
            personas: stage == "personas",
            simulate: stage == "simulate",
            annotate: stage == "annotate",
            compare: stage == "compare",
            report: stage == "report",
        };
    }

    match run_pipeline(&cfg, args.resume) {
        Ok(manifest) => {
            for (name, outcome) in &manifest.stages {
                println!(
                    "stage {name}: ok={} failed={}{}",
                    outcome.ok,
                    outcome.failed,
                    if outcome.notes.is_empty() {
                        String::new()
                    } else {
                        format!(" ({} notes)", outcome.notes.len())
                    }
                );
            }
            if manifest.has_failures() {
                eprintln!("completed with recorded failures");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("fatal: {e}");
            ExitCode::from(1)
        }
    }
}
