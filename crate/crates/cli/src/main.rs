use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use asap_cli::commands::{cmd_analyze, cmd_equilibrium, cmd_montecarlo, cmd_scenario, cmd_simulate};
use asap_cli::config::{Overrides, ScenarioConfig};
use asap_cli::error::{CliError, CliResult};
use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "asap", version, about = "Simulate and analyze assignment-and-appraisal team dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed for generated teams and Monte Carlo samples.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Monte Carlo worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Integration horizon; overrides `integrator.t_end` and `montecarlo.horizon`.
    #[arg(long, global = true)]
    horizon: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate each initial condition and write trajectories plus a summary.
    Simulate,
    /// Compute the optimal workload and equilibrium appraisal matrices.
    Equilibrium,
    /// Estimate the probability of bounded reduced trajectories.
    Montecarlo,
    /// Run a member-switching scenario.
    Scenario,
    /// Recheck conservation and monotonicity on stored trajectory files.
    Analyze {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn load(cli: &Cli, required: bool) -> CliResult<Option<ScenarioConfig>> {
    let Some(path) = &cli.config else {
        return if required { Err(CliError::Invalid("--config is required for this command".into())) } else { Ok(None) };
    };
    let mut cfg = ScenarioConfig::load(path)?;
    cfg.apply(&Overrides { out: cli.out.clone(), seed: cli.seed, workers: cli.workers, horizon: cli.horizon });
    Ok(Some(cfg))
}

fn emit<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("<stdout>")(e)),
        _ => Ok(()),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate => emit(&cmd_simulate(&load(cli, true)?.expect("required"))?),
        Command::Equilibrium => emit(&cmd_equilibrium(&load(cli, true)?.expect("required"))?),
        Command::Montecarlo => emit(&cmd_montecarlo(&load(cli, true)?.expect("required"))?),
        Command::Scenario => emit(&cmd_scenario(&load(cli, true)?.expect("required"))?),
        Command::Analyze { files } => {
            let cfg = load(cli, false)?;
            let out = match (&cli.out, &cfg) {
                (Some(o), _) => o.clone(),
                (None, Some(c)) => c.output.dir.clone(),
                (None, None) => PathBuf::from("out"),
            };
            emit(&cmd_analyze(files, cfg.as_ref(), &out)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ASAP_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", serde_json::to_string(&e.report()).expect("error serializes"));
            ExitCode::FAILURE
        }
    }
}
