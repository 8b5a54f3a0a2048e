use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dana_cli::{
    parse_config, parse_speedup_config, run_experiment, speedup_table, write_speedup_csv, CliError,
    RunOptions,
};

#[derive(Parser)]
#[command(
    name = "dana",
    version,
    about = "Simulate asynchronous parameter-server training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, workers, seed) combination in a config.
    Run {
        config: PathBuf,
        /// Output directory for the metrics CSVs and summary.json.
        #[arg(long, env = "DANA_OUT_DIR", default_value = "results")]
        out: PathBuf,
        /// Maximum number of simulations running at once.
        #[arg(long)]
        jobs: Option<usize>,
        /// Added to every seed in the config.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Write the theoretical async/sync speedup table as CSV.
    Speedup {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            seed_offset,
        } => {
            if jobs == Some(0) {
                return Err(CliError::Config("--jobs must be at least 1".into()));
            }
            let config = parse_config(&read_config(&config)?)?;
            let report = run_experiment(
                &config,
                &RunOptions {
                    out_dir: out.clone(),
                    jobs,
                    seed_offset,
                },
            )?;
            for (algorithm, workers) in report.fully_diverged() {
                eprintln!("warning: {algorithm} with {workers} workers diverged in every seed");
            }
            println!("wrote {} runs to {}", report.runs.len(), out.display());
            Ok(report.exit_code())
        }
        Command::Speedup { config, out } => {
            let config = parse_speedup_config(&read_config(&config)?)?;
            let rows = speedup_table(&config)?;
            write_speedup_csv(&rows, BufWriter::new(File::create(&out)?))?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
