use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use junction_mfg_cli::config::Suite;
use junction_mfg_cli::{run, scenarios, verify, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "junction-mfg", version, about = "Optimal control and mean field games on a star network")]
struct Cli {
    /// Worker threads (defaults to all cores); never changes the output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Run a preset without a config file.
    #[arg(long)]
    scenario: Option<String>,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Value function, residuals and bounds for measure-independent costs.
    SolveHj(RunArgs),
    /// Equilibrium by fictitious play.
    Mfg(RunArgs),
    /// Run a verification suite: oracle, w1, holder or dpp.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Overrides `verify.suite` from the config.
        #[arg(long, value_parser = parse_suite)]
        suite: Option<Suite>,
    },
    /// List the scenario presets.
    Scenarios,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::ALL
        .into_iter()
        .find(|suite| suite.name() == s)
        .ok_or_else(|| format!("unknown suite `{s}`"))
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    match (&args.config, &args.scenario) {
        (Some(path), _) => ExperimentConfig::load(path),
        (None, Some(name)) => scenarios::preset(name)
            .ok_or_else(|| CliError::Config(format!("scenario: unknown preset `{name}`"))),
        (None, None) => Err(CliError::Config("pass --config or --scenario".into())),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::SolveHj(args) => {
            let s = run::run_solve_hj(&load(&args)?, &args.out)?;
            println!(
                "max|u| {:.6}  max interior residual {:.3e}  bounds ok: {}",
                s.max_abs_u, s.max_interior_residual, s.bounds_ok
            );
        }
        Command::Mfg(args) => {
            let s = run::run_mfg(&load(&args)?, &args.out)?;
            println!(
                "converged: {}  iteration {}  exploitability {:.3e}",
                s.converged, s.iteration, s.exploitability
            );
        }
        Command::Verify { run, suite } => {
            let config = load(&run)?;
            let suite = suite
                .or(config.verify.map(|v| v.suite))
                .ok_or_else(|| CliError::Config("verify.suite: no suite named".into()))?;
            let report = verify::run_verify(&config, suite, &run.out)?;
            for c in &report.checks {
                println!("{} {}: {:.3e} (threshold {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.measured, c.threshold);
            }
        }
        Command::Scenarios => {
            for name in scenarios::NAMES {
                println!("{name:20} {}", scenarios::describe(name).unwrap_or(""));
            }
        }
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
