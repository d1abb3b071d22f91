use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vacflow_core::config::{parse_config, Experiment, RunConfig};
use vacflow_core::experiment::{run, CheckStatus, RunStatus};

/// Runs vacflow experiments.
///
/// Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
/// 3 solver failure.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Time-march the initial data and record conserved quantities and norms.
    Simulate(RunArgs),
    /// Compare the transport step with the characteristics solution.
    OracleCompare(RunArgs),
    /// Compare runs started from c0 + delta for shrinking delta.
    VacuumStudy(RunArgs),
    /// Check that |u|_inf stays above the momentum floor.
    Nondecay(RunArgs),
    /// Functional-inequality audits over seeded random fields.
    Audits(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Configuration file (defaults are used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed, overriding `seed` (at most 2^63 - 1 so that the
    /// manifest stays a valid configuration).
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::OracleCompare(a) => (Experiment::OracleCompare, a),
        Command::VacuumStudy(a) => (Experiment::VacuumStudy, a),
        Command::Nondecay(a) => (Experiment::Nondecay, a),
        Command::Audits(a) => (Experiment::Audits, a),
    };
    let parsed = match &args.config {
        Some(path) => parse_config(path),
        None => Ok(RunConfig::default()),
    };
    let checked = parsed.and_then(|mut cfg| {
        cfg.experiment = experiment;
        cfg.check_experiment().map(|_| cfg)
    });
    let mut cfg = match checked {
        Ok(cfg) => cfg,
        Err(errors) => {
            for e in &errors.0 {
                eprintln!("config error: {e}");
            }
            return ExitCode::from(RunStatus::ConfigError.exit_code() as u8);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output.dir = out;
    }
    let dir = cfg.output.dir.clone();
    match run(&cfg, &dir) {
        Ok(outcome) => {
            let failed = outcome.status != RunStatus::Pass;
            for check in &outcome.checks {
                if failed && check.status == CheckStatus::Fail {
                    eprintln!("{check}");
                } else if !args.quiet {
                    println!("{check}");
                }
            }
            if let Some(f) = &outcome.failure {
                eprintln!("solver failure: {f}");
            }
            if !args.quiet {
                println!("artifacts in {}", dir.display());
            }
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
