use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hgp::harness::{run_with_threads, RunConfig, Verb};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Fit,
    Predict,
    Decompose,
    Diagnose,
    Bench,
}

impl From<Command> for Verb {
    fn from(c: Command) -> Self {
        match c {
            Command::Fit => Verb::Fit,
            Command::Predict => Verb::Predict,
            Command::Decompose => Verb::Decompose,
            Command::Diagnose => Verb::Diagnose,
            Command::Bench => Verb::Bench,
        }
    }
}

/// Harmonic kernel decomposition and harmonic variational GPs.
#[derive(Debug, Parser)]
#[command(name = "hgp", version)]
struct Cli {
    #[arg(value_enum)]
    verb: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for per-part computations.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::load(&cli.config).and_then(|mut cfg| {
        if let Some(out) = cli.out {
            cfg.out = out;
        }
        run_with_threads(cli.verb.into(), &cfg, cli.threads)
    });
    match result {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
