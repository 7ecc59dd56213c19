use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use synthrr::pipeline::{Overrides, Pipeline, Stage};

/// Retrieval-grounded synthetic dataset generation.
#[derive(Parser)]
#[command(name = "synth", version)]
struct Cli {
    /// index | source | icl | synthesize | fewgen | bootstrap | evaluate | datamap | filter | all
    stage: Stage,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    stage_out: Option<PathBuf>,
    /// Ignore the response cache and redo LLM stages.
    #[arg(long)]
    no_cache: bool,
    /// Overrides `rng_seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        output_dir: cli.stage_out,
        rng_seed: cli.seed,
    };
    let result = Pipeline::from_file(&cli.config, &overrides, cli.no_cache).and_then(|p| p.run(cli.stage));
    match result {
        Ok(reports) => {
            for r in reports {
                let status = if r.skipped { "up to date" } else { "done" };
                println!("{}: {status}", r.stage);
                for note in r.notes.iter().filter(|_| !r.skipped) {
                    println!("  {}", note.replace('\n', "\n  "));
                }
                for out in &r.outputs {
                    println!("  -> {}", out.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
