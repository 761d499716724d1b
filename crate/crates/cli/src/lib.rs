//! Command-line layer over `laplace-core`: JSON run configs, the `fit`,
//! `gradcheck`, `sample`, `bench` and `simulate` commands, an HMC sampler
//! and chain diagnostics.

pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod hmc;
pub mod output;
pub mod problem;
pub mod targets;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Method;
use crate::config::{RunConfig, SimulateConfig, Strategy};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "laplace",
    version,
    about = "Integrated Laplace approximation with adjoint gradients"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find the conditional mode and the approximate log marginal.
    Fit,
    /// Compare the adjoint gradient with central differences.
    Gradcheck,
    /// Draw hyperparameters (and latents) by HMC.
    Sample {
        #[arg(long, value_enum, default_value = "marginal")]
        method: Method,
    },
    /// Time fits and gradients on synthetic Poisson data.
    Bench,
    /// Write a synthetic PK data set.
    Simulate,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.strategy {
        cfg.strategy = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(seed) = cli.seed {
        if let Some(s) = cfg.sampler.as_mut() {
            s.seed = seed;
        }
        if let Some(b) = cfg.bench.as_mut() {
            b.seed = seed;
        }
        if let Some(s) = cfg.simulate.as_mut() {
            s.seed = seed;
        }
    }
    Ok(cfg)
}

/// Runs one command and returns a line for stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Fit => {
            let cfg = load(cli)?;
            let r = commands::cmd_fit(&cfg)?;
            Ok(format!(
                "log marginal {:.10} after {} iterations -> {}",
                r.log_marginal,
                r.iterations,
                cfg.output_dir.join("fit.json").display()
            ))
        }
        Command::Gradcheck => {
            let cfg = load(cli)?;
            let r = commands::cmd_gradcheck(&cfg)?;
            Ok(format!(
                "max relative error {:.3e} (tolerance {:.1e})",
                r.max_rel_error, r.tolerance
            ))
        }
        Command::Sample { method } => {
            let cfg = load(cli)?;
            let r = commands::cmd_sample(&cfg, *method)?;
            let mut s = format!(
                "{} chains x {} draws, acceptance {:.3}",
                r.chains, r.draws_per_chain, r.acceptance_rate
            );
            for w in &r.warnings {
                s.push_str("\nwarning: ");
                s.push_str(w);
            }
            Ok(s)
        }
        Command::Bench => {
            let cfg = load(cli)?;
            let r = commands::cmd_bench(&cfg)?;
            Ok(format!(
                "{} rows -> {}",
                r.rows.len(),
                cfg.output_dir.join("bench.csv").display()
            ))
        }
        Command::Simulate => {
            let (mut sim, out) = match &cli.config {
                Some(_) => {
                    let cfg = load(cli)?;
                    (cfg.simulate.clone().unwrap_or_default(), cfg.output_dir)
                }
                None => (
                    SimulateConfig::default(),
                    cli.out.clone().unwrap_or_else(|| PathBuf::from("out")),
                ),
            };
            if let Some(seed) = cli.seed {
                sim.seed = seed;
            }
            let path = commands::cmd_simulate(&sim, &out)?;
            Ok(format!("wrote {}", path.display()))
        }
    }
}
