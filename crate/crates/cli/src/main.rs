use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orthate_cli::commands::{cmd_estimate, cmd_simulate, cmd_sweep, cmd_verify, CommandError, Overrides, EXIT_CONFIG};
use orthate_cli::config::{load_run_config, Format, RunConfig};

/// Higher-order orthogonal estimators of average treatment effects.
#[derive(Parser)]
#[command(name = "orthate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every learner and estimator on the configured datasets.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Drop datasets with an infinite DML estimate from the aggregate.
        #[arg(long)]
        filter_infinite: bool,
        #[arg(long)]
        propensity_floor: Option<f64>,
    },
    /// Simulation sweep over one grid of the [simulation] section.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// confounding, dimension or samplesize
        #[arg(long)]
        sweep: String,
    },
    /// Check the coefficient recursion and the orthogonality of each score.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Write the simulated replications as dataset files.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
}

fn prepare(common: &Common, extra: Overrides) -> Result<RunConfig, CommandError> {
    let mut cfg = load_run_config(&common.config).map_err(|e| CommandError::config(e.to_string()))?;
    let format = match common.format.as_deref() {
        None => None,
        Some(s) => Some(Format::parse(s).ok_or_else(|| CommandError::config(format!("--format `{s}` must be csv or json")))?),
    };
    Overrides { seed: common.seed, out: common.out.clone(), format, ..extra }.apply(&mut cfg)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, CommandError> {
    match cli.command {
        Command::Estimate { common, filter_infinite, propensity_floor } => {
            let cfg = prepare(&common, Overrides { filter_infinite, propensity_floor, ..Default::default() })?;
            cmd_estimate(&cfg)
        }
        Command::Sweep { common, sweep } => cmd_sweep(&prepare(&common, Overrides::default())?, &sweep),
        Command::Verify { common } => cmd_verify(&prepare(&common, Overrides::default())?),
        Command::Simulate { common } => cmd_simulate(&prepare(&common, Overrides::default())?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
