use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use leakscope::ingest::to_canonical_string;
use leakscope_cli::config::load_json;
use leakscope_cli::{cmd_generate, cmd_ingest, cmd_run, render, write_atomic, CliError, ExperimentConfig, GenerateConfig, IngestConfig, Report};

/// Packet-size side-channel experiments on encrypted messaging traffic.
#[derive(Parser)]
#[command(name = "leakscope", version)]
struct Cli {
    /// Worker threads for cross-validation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labeled dataset.
    Generate {
        /// Scenario file; defaults to iMessage on iOS and OSX.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset file to write.
        #[arg(long, default_value = "dataset.jsonl")]
        out: PathBuf,
    },
    /// Convert labeled pcap captures into a dataset.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "dataset.jsonl")]
        out: PathBuf,
    },
    /// Run one experiment and write its report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Report directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a report as text tables.
    Report {
        report: PathBuf,
        /// Print the accuracy curve as CSV instead.
        #[arg(long)]
        csv: bool,
    },
}

fn write_dataset(dataset: &leakscope::Dataset, out: &PathBuf) -> Result<(), CliError> {
    write_atomic(out, to_canonical_string(dataset).as_bytes())?;
    eprintln!("wrote {} traces to {}", dataset.traces.len(), out.display());
    Ok(())
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { config, seed, out } => {
            let mut config = match config {
                Some(path) => load_json::<GenerateConfig>(&path)?,
                None => GenerateConfig::default(),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            write_dataset(&cmd_generate(&config)?, &out)
        }
        Command::Ingest { config, out } => write_dataset(&cmd_ingest(&load_json::<IngestConfig>(&config)?)?, &out),
        Command::Run { config, seed, out } => {
            let mut config = load_json::<ExperimentConfig>(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.out = out;
            }
            let (report, written) = cmd_run(&config)?;
            print!("{}", render(&report));
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Report { report, csv } => {
            let text = std::fs::read_to_string(&report).map_err(|e| CliError::Data(format!("{}: {e}", report.display())))?;
            let report: Report = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", report.display())))?;
            if csv {
                let curve = report
                    .result
                    .curve()
                    .ok_or_else(|| CliError::Data(format!("task {} has no accuracy curve", report.config.task.name())))?;
                print!("{}", curve.to_csv());
            } else {
                print!("{}", render(&report));
            }
            Ok(())
        }
    }
}

fn setup(jobs: Option<usize>) -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEAKSCOPE_LOG", "warn")).init();
    if let Some(jobs) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("starting the worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors are configuration errors; clap would exit with 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = setup(cli.jobs) {
        eprintln!("error: {e:#}");
        return ExitCode::from(3);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
