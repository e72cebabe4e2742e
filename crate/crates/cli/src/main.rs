use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lockiso::analysis::RateScope;
use lockiso_cli::commands::{cmd_analyze, cmd_report, cmd_resolve, cmd_simulate, Options};
use lockiso_cli::exit_code_for;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Restrict {
    Shared,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Parser)]
#[command(name = "lockiso", version, about = "Lock-sharing analysis for co-located workloads")]
struct Cli {
    /// Session manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the simulation config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Call depth limit for stack resolution.
    #[arg(long, global = true, default_value_t = lockiso::staticmap::DEFAULT_MAX_DEPTH)]
    max_depth: usize,
    /// Which locks count toward a pair's cumulative rate.
    #[arg(long, global = true, value_enum, default_value = "shared")]
    restrict: Restrict,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify shared and private locks, and compute rates and scores.
    Analyze,
    /// Map acquisitions to source sites and lock objects.
    Resolve {
        /// Code-facts bundle; defaults to the manifest's.
        #[arg(long)]
        facts: Option<PathBuf>,
    },
    /// Run a simulation config and write its traces.
    Simulate {
        config: PathBuf,
    },
    /// Print the report tables found in --out.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let Format::Csv = cli.format;
    let options = Options {
        restrict: match cli.restrict {
            Restrict::Shared => RateScope::Shared,
            Restrict::All => RateScope::All,
        },
        max_depth: cli.max_depth,
    };
    if options.max_depth == 0 {
        bail!("--max-depth must be at least 1");
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from("."));
    let manifest = || cli.manifest.clone().context("--manifest is required for this command");
    match cli.command {
        Command::Analyze => {
            for path in cmd_analyze(&manifest()?, &out, &options)? {
                log::info!("wrote {}", path.display());
            }
        }
        Command::Resolve { facts } => {
            let res = cmd_resolve(&manifest()?, facts.as_deref(), &out, &options)?;
            let c = res.coverage;
            println!(
                "mapping coverage: {:.3} ({}/{} locks mapped, {} to an object)",
                c.fraction(),
                c.mapped,
                c.total,
                c.with_object
            );
        }
        Command::Simulate { config } => {
            for path in cmd_simulate(&config, &out, cli.seed)? {
                log::info!("wrote {}", path.display());
            }
        }
        Command::Report => {
            cmd_report(&out, &mut io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
        Err(_) => ExitCode::from(2),
    }
}
