use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinklab::config::{self, ConfigError, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "kinklab", version, about = "Kink-impurity simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a shipped preset.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (default: out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for sweeps.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a config without running it.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// List the shipped presets.
    Presets,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path),
            (None, Some(name)) => RunConfig::preset(name),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

fn fail(err: RunError) -> ExitCode {
    eprintln!("{}", err.record());
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { source, out, workers } => {
            let mut cfg = match source.load() {
                Ok(c) => c,
                Err(e) => return fail(e.into()),
            };
            if let Some(n) = workers {
                cfg.sweep.workers = n.max(1);
            }
            let issues = config::validate(&cfg);
            if !issues.is_empty() {
                for issue in &issues {
                    eprintln!("{issue}");
                }
                return ExitCode::FAILURE;
            }
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            match config::run(&cfg, &out) {
                Ok(report) => {
                    for line in &report.summary {
                        println!("{line}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Validate { source } => {
            let cfg = match source.load() {
                Ok(c) => c,
                Err(e) => return fail(e.into()),
            };
            let issues = config::validate(&cfg);
            if issues.is_empty() {
                println!("ok");
                ExitCode::SUCCESS
            } else {
                for issue in &issues {
                    println!("{issue}");
                }
                ExitCode::FAILURE
            }
        }
        Command::Presets => {
            for (name, _) in config::PRESETS {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
    }
}
