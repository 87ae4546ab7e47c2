use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use drcap::config::ExperimentConfig;
use drcap::experiment;

#[derive(Parser)]
#[command(name = "drcap", version, about = "Demand-response capacity planning experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides synth.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Config override, repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Multiply reported costs by this many slots per year
    #[arg(long, global = true, value_name = "SLOTS_PER_YEAR")]
    annualize: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// OPT, LIN and SEQ cost over the capacity-price grid
    Compare,
    /// LIN+ cost over the commitment grid, one file per a_rsd
    RhoSweep,
    /// Distributed price negotiation against the centralized solve
    Negotiate,
    /// Write the configured scenario set as CSV
    Synth,
    /// Check the scenario invariants of the configured source
    Validate,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut overrides = cli.common.set.clone();
    if let Some(seed) = cli.common.seed {
        overrides.push(format!("synth.seed={seed}"));
    }
    let cfg = ExperimentConfig::load(cli.common.config.as_deref(), &overrides)?;
    let scale = match cli.common.annualize {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(drcap::Error::Config {
                key: "--annualize".into(),
                reason: format!("must be positive, got {s}"),
            }
            .into())
        }
        None => 1.0,
    };
    let out = &cli.common.out;
    let written = match cli.command {
        Command::Compare => experiment::cmd_compare(&cfg, out, scale),
        Command::RhoSweep => experiment::cmd_rho_sweep(&cfg, out, scale),
        Command::Negotiate => experiment::cmd_negotiate(&cfg, out, scale),
        Command::Synth => experiment::cmd_synth(&cfg, out),
        Command::Validate => {
            let problems = experiment::cmd_validate(&cfg).context("loading scenarios")?;
            if problems.is_empty() {
                println!("ok");
                return Ok(());
            }
            for p in &problems {
                println!("{p}");
            }
            return Err(drcap::Error::Config {
                key: "source".into(),
                reason: format!("{} scenario violations", problems.len()),
            }
            .into());
        }
    }?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<drcap::Error>().map_or(1, drcap::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
