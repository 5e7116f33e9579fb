//! `pathloss-lab`: file-based pipeline from raw measurements to a run report.
//!
//! Exit codes: 0 success, 1 usage, 2 data or contract violation, 3 I/O.

mod artifact;
mod clean;
mod model;
mod report;
mod residuals;
mod synth;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};

use artifact::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pathloss-lab", version, about = "Environment-aware indoor path loss analysis")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG also works.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sort, deduplicate, filter spreading factors and remove outliers.
    Clean(clean::CleanArgs),
    /// Fit a path loss model with a held-out split and cross-validation.
    Fit(model::FitArgs),
    /// Type II ANOVA and coefficient t-tests.
    Anova(model::AnovaArgs),
    /// Residual diagnostics, distribution fits and plot tables.
    Residuals(residuals::ResidualsArgs),
    /// Generate a synthetic campaign.
    Synth(synth::SynthArgs),
    /// Merge artifacts into one run report.
    Report(report::ReportArgs),
}

const THREADS_VAR: &str = "PATHLOSS_LAB_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR}='{raw}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Clean(a) => clean::run(a),
        Command::Fit(a) => model::run_fit(a),
        Command::Anova(a) => model::run_anova(a),
        Command::Residuals(a) => residuals::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Report(a) => report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
