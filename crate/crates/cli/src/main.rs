//! Command-line driver: runs the homogenization experiments described by a
//! JSON config and writes metric reports plus artifacts.
//!
//! Exit codes: 0 all metrics passed, 1 at least one metric failed,
//! 2 configuration or usage error.

use clap::{Parser, Subcommand};
use helimag_cli::config::RunConfig;
use helimag_cli::{experiments, out, report};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "helimag-cli",
    about = "Effective tensors and energy minimization for chiral micromagnetic composites"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print every metric, not only failures.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrector solve on a laminate RVE vs the closed forms.
    ValidateLaminate,
    /// Minimize the homogenized energy and fit the helical minimizer.
    Helix,
    /// Heterogeneous-vs-homogenized minimum energies across scales.
    GammaSweep,
    /// Spatial ergodic averages against expectations with a CLT envelope.
    Birkhoff,
    /// Corrector solve and effective model on an iid tessellation.
    Correctors,
    /// Energy breakdowns of a reference helix, heterogeneous and homogenized.
    EnergyEval,
}

fn run(cli: &Cli) -> anyhow::Result<report::RunReport> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok(); // a second invocation in-process keeps the first pool
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    let out = cli.out.as_deref();
    let report = match cli.command {
        Command::ValidateLaminate => experiments::run_laminate_validation(&cfg, out)?,
        Command::Helix => experiments::run_helix_experiment(&cfg, out)?,
        Command::GammaSweep => experiments::run_gamma_sweep(&cfg, out)?,
        Command::Birkhoff => experiments::run_birkhoff(&cfg, out)?,
        Command::Correctors => experiments::run_correctors(&cfg, out)?,
        Command::EnergyEval => experiments::run_energy_eval(&cfg, out)?,
    };
    if let Some(dir) = out {
        out::write_json_atomic(dir, "report.json", &report)?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            report.print_summary(cli.verbose);
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}
