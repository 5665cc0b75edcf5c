//! `mechsim`: run repeated-market simulations and experiments from the
//! command line.
//!
//! Exit codes: 0 on success, 1 when the acceptance suite fails, 2 on usage or
//! configuration errors.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use experiments::FlagEcho;

#[derive(Parser)]
#[command(name = "mechsim", version, about = "Repeated two-stage market mechanism simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write the full per-day ledger
    Simulate {
        /// JSON document with a "game" or "dr" market, strategies and params
        #[arg(long)]
        config: PathBuf,
        /// Override the configured horizon
        #[arg(long)]
        days: Option<u64>,
        /// Seed for the run (overrides the config)
        #[arg(long)]
        seed: Option<u64>,
        /// Override the window exponent
        #[arg(long)]
        gamma: Option<f64>,
        /// Override the penalty exponent
        #[arg(long = "penalty-exponent")]
        penalty_exponent: Option<f64>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a predefined experiment and emit figure-ready CSV data
    Experiment {
        kind: ExperimentKind,
        /// Optional JSON parameter document (kind-specific)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds, comma separated; defaults to 0..19
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the per-run day count
        #[arg(long)]
        days: Option<u64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long = "penalty-exponent")]
        penalty_exponent: Option<f64>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Seed used when kind is "simulate"
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentKind {
    #[value(name = "social_cost_vs_n")]
    SocialCostVsN,
    #[value(name = "payment_sensitivity")]
    PaymentSensitivity,
    #[value(name = "posted_price_comparison")]
    PostedPriceComparison,
    #[value(name = "acceptance_suite")]
    AcceptanceSuite,
    #[value(name = "simulate")]
    Simulate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            config,
            days,
            seed,
            gamma,
            penalty_exponent,
            out,
        } => {
            let flags = FlagEcho {
                days,
                seed,
                gamma,
                penalty_exponent,
            };
            let doc = config::load_sim_doc(&config)?;
            experiments::run_simulate(&doc, &config, &flags, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment {
            kind,
            config,
            seeds,
            days,
            gamma,
            penalty_exponent,
            out,
            seed,
        } => {
            let flags = FlagEcho {
                days,
                seed,
                gamma,
                penalty_exponent,
            };
            let seeds = seeds.unwrap_or_else(|| (0..20).collect());
            if seeds.is_empty() {
                anyhow::bail!("--seeds must not be empty");
            }
            match kind {
                ExperimentKind::SocialCostVsN => {
                    let params = config::load_params(config.as_deref())?;
                    experiments::run_social_cost_vs_n(
                        &params,
                        config.as_deref(),
                        &flags,
                        &seeds,
                        &out,
                    )?;
                    Ok(ExitCode::SUCCESS)
                }
                ExperimentKind::PaymentSensitivity => {
                    let params = config::load_params(config.as_deref())?;
                    experiments::run_payment_sensitivity(
                        &params,
                        config.as_deref(),
                        &flags,
                        &seeds,
                        &out,
                    )?;
                    Ok(ExitCode::SUCCESS)
                }
                ExperimentKind::PostedPriceComparison => {
                    let params = config::load_params(config.as_deref())?;
                    experiments::run_posted_price_comparison(
                        &params,
                        config.as_deref(),
                        &flags,
                        &seeds,
                        &out,
                    )?;
                    Ok(ExitCode::SUCCESS)
                }
                ExperimentKind::AcceptanceSuite => {
                    let all_passed = experiments::run_acceptance_suite(&flags, &out)?;
                    if all_passed {
                        Ok(ExitCode::SUCCESS)
                    } else {
                        Ok(ExitCode::from(1))
                    }
                }
                ExperimentKind::Simulate => {
                    let config = config
                        .ok_or_else(|| anyhow::anyhow!("simulate needs --config"))?;
                    let doc = config::load_sim_doc(&config)?;
                    experiments::run_simulate(&doc, &config, &flags, &out)?;
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
    }
}
