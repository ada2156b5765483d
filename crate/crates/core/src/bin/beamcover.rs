//! Command-line front end: parse a scenario config, run the Monte Carlo
//! experiment, write the per-user metrics CSV, and print the requested
//! aggregate summary.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beamcover::harness::{
    parse_config, run_experiment, summarize, write_csv, ExperimentKind,
};

/// Print to stdout, exiting quietly when the reading end has gone away.
fn emit(text: &str) {
    if let Err(e) = io::stdout().write_all(text.as_bytes()) {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

#[derive(Parser)]
#[command(name = "beamcover", version, about = "Link-level Monte Carlo simulator for copilot user grouping and pilot allocation in multi-cell massive MIMO uplink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write a CSV.
    Simulate {
        /// Path to a key=value scenario config.
        config: PathBuf,
        /// Output CSV path.
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Aggregate printed after the run: mse, se, or cdf.
        #[arg(long, default_value = "se")]
        experiment: String,
        /// Override the config's worker thread count.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn run(cli: Cli) -> beamcover::Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed, trials, experiment, threads } => {
            let kind: ExperimentKind = experiment.parse()?;
            let mut cfg = parse_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            if let Some(threads) = threads {
                cfg.threads = threads;
            }
            cfg.validate()?;
            let table = run_experiment(&cfg)?;
            write_csv(&table, &out)?;
            emit(&summarize(&table, kind));
            emit(&format!("{} rows -> {}\n", table.rows.len(), out.display()));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
