mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{CommonArgs, RunConfig};
use crate::error::CliError;

/// Matrix Darboux transformations of the two-channel free particle in the
/// oscillator basis.
#[derive(Debug, Parser)]
#[command(name = "jdx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the transformed interaction a±, b± and the blocks G, R
    Generate(CommonArgs),
    /// Run the verification suite and write a JSON report
    Verify(CommonArgs),
    /// Write transformed scattering states for each energy
    Transform(CommonArgs),
    /// Write weighted deviations from the large-n forms and the P-matrix table
    Asymptotics(CommonArgs),
    /// Exploratory: finite-section eigenvalues of the original and transformed operators
    Spectrum(CommonArgs),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("JDX_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config("JDX_THREADS", format!("expected a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::config("JDX_THREADS", e.to_string()))
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Generate(args) => print_paths(&commands::generate(&RunConfig::resolve(&args)?)?),
        Command::Transform(args) => print_paths(&commands::transform(&RunConfig::resolve(&args)?)?),
        Command::Asymptotics(args) => print_paths(&commands::asymptotics_cmd(&RunConfig::resolve(&args)?)?),
        Command::Spectrum(args) => print_paths(&commands::spectrum(&RunConfig::resolve(&args)?)?),
        Command::Verify(args) => {
            let (report, path) = commands::verify(&RunConfig::resolve(&args)?)?;
            for section in &report.sections {
                for check in &section.checks {
                    let status = match (&check.skipped, check.pass) {
                        (Some(_), _) => "skip",
                        (None, true) => "pass",
                        (None, false) => "FAIL",
                    };
                    println!(
                        "{status} {:<5} {:<24} {:.3e} <= {:.1e}",
                        section.parity.to_string(),
                        check.name,
                        check.residual,
                        check.tolerance
                    );
                }
            }
            let s = &report.summary;
            println!(
                "{} passed, {} failed, {} skipped in {:.2} s; report {}",
                s.passed,
                s.failed,
                s.skipped,
                s.wall_time_s,
                path.display()
            );
            if !report.all_passed() {
                return Err(CliError::CheckFailed(report.failed_names()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
