use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use shiftbin_cli::{cmd_rates, cmd_run, cmd_sweep, cmd_verify, GroupBy};

#[derive(Parser)]
#[command(
    name = "shiftbin",
    version,
    about = "Simulate binning classifiers under label and group shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GroupField {
    Scenario,
    Estimator,
    Tau,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write records.csv, summary.json and manifest.json.
    Run(RunArgs),
    /// Run the minority/majority addition sweep from the config's [sweep] section.
    Sweep(RunArgs),
    /// Check the hat-function and hard-family constants.
    Verify {
        #[arg(long, default_value_t = 16)]
        kmax: usize,
        #[arg(long, hide = true)]
        tolerance_override: Option<f64>,
    },
    /// Fit log-log rates of mean excess risk from a records CSV.
    Rates {
        /// records.csv produced by `run`.
        #[arg(long)]
        records: PathBuf,
        /// Fields that split records into separate fits.
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [GroupField::Scenario, GroupField::Estimator, GroupField::Tau])]
        group_by: Vec<GroupField>,
        /// Also write rates.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(a) => {
            for p in cmd_run(&a.config, &a.out, a.threads, a.seed)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Sweep(a) => {
            for p in cmd_sweep(&a.config, &a.out, a.threads, a.seed)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Verify {
            kmax,
            tolerance_override,
        } => return cmd_verify(kmax, tolerance_override, &mut std::io::stdout().lock()),
        Command::Rates {
            records,
            group_by,
            out,
        } => {
            let by = GroupBy {
                scenario: group_by.contains(&GroupField::Scenario),
                estimator: group_by.contains(&GroupField::Estimator),
                tau: group_by.contains(&GroupField::Tau),
            };
            cmd_rates(&records, by, out.as_deref(), &mut std::io::stdout().lock())?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
