use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sa_cli::{
    execute_check, execute_run, execute_sweep, CheckKind, ExperimentConfig, HarnessError,
};
use sa_core::runner::RunStatus;

#[derive(Parser)]
#[command(
    name = "sa",
    about = "State-dependent stochastic approximation experiment harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configured training run and write its trajectory file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress the summary line.
        #[arg(long)]
        quiet: bool,
    },
    /// Verify gradients, the downhill condition, or the schedule.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(value_enum)]
        check: CheckName,
        #[arg(long)]
        quiet: bool,
    },
    /// Run several seeds and report per-seed results plus the converged
    /// fraction.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Override the config's output path (per-seed suffixes are added).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckName {
    Gradient,
    Downhill,
    Schedule,
}

impl From<CheckName> for CheckKind {
    fn from(name: CheckName) -> Self {
        match name {
            CheckName::Gradient => CheckKind::Gradient,
            CheckName::Downhill => CheckKind::Downhill,
            CheckName::Schedule => CheckKind::Schedule,
        }
    }
}

fn fail(err: &HarnessError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            quiet,
        } => {
            let config = match ExperimentConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match execute_run(&config, seed, out) {
                Ok(summary) => {
                    if !quiet {
                        println!("{}", summary.one_line());
                    }
                    if let RunStatus::A2Violated { at } = summary.status {
                        eprintln!(
                            "error: A2 violated at iteration {at}: |theta| left the monitored ball"
                        );
                        return ExitCode::from(3);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Check {
            config,
            check,
            quiet,
        } => {
            let config = match ExperimentConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match execute_check(&config, check.into()) {
                Ok(report) => {
                    if !quiet {
                        for line in &report.lines {
                            println!("{line}");
                        }
                        println!("check: {}", if report.passed { "pass" } else { "FAIL" });
                    }
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep {
            config,
            seeds,
            out,
            quiet,
        } => {
            let config = match ExperimentConfig::from_path(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match execute_sweep(&config, &seeds, out) {
                Ok(report) => {
                    let mut any_error = false;
                    if !quiet {
                        for outcome in &report.outcomes {
                            match &outcome.result {
                                Ok(summary) => {
                                    println!("seed={} {}", outcome.seed, summary.one_line())
                                }
                                Err(message) => {
                                    any_error = true;
                                    println!("seed={} error: {message}", outcome.seed);
                                }
                            }
                        }
                        println!("fraction_converged={:.3}", report.fraction_converged);
                    } else {
                        any_error = report.outcomes.iter().any(|o| o.result.is_err());
                    }
                    if any_error {
                        ExitCode::FAILURE
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
