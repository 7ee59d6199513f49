use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use percept_ctl::config::{self, catalogue};
use percept_ctl::CliError;

#[derive(Parser)]
#[command(
    name = "percept-ctl",
    version,
    about = "Run perception-steering scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory.csv, summary.json and plot.svg.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a key, e.g. `--set parameters.k=0.3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Output directory; takes precedence over `output_dir` in the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a config and list every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// List scenarios and their parameters.
    Scenarios,
}

fn load(path: &Path, sets: &[String]) -> Result<config::ScenarioConfig, CliError> {
    let mut raw = config::load(path)?;
    config::apply_overrides(&mut raw, sets)?;
    config::validate(&raw).map_err(CliError::Config)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            sets,
            output,
        } => {
            let mut cfg = load(&config, &sets)?;
            if output.is_some() {
                cfg.output_dir = output;
            }
            let (summary, dir) = percept_ctl::run(&cfg)?;
            println!(
                "{}: wrote {} to {}",
                summary.scenario,
                summary.files.join(", "),
                dir.display()
            );
            for (k, v) in &summary.verdicts {
                println!("  {k}: {v}");
            }
        }
        Command::Validate { config, sets } => {
            let cfg = load(&config, &sets)?;
            println!(
                "ok: scenario {} with {} parameters",
                cfg.scenario,
                cfg.parameters.len()
            );
        }
        Command::Scenarios => print!("{}", catalogue()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
