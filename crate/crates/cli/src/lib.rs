//! Command-line front end: configuration files, certificate reports,
//! simulation runs with CSV output, convergence studies and the oracle
//! suite.

pub mod commands;
pub mod config;
pub mod extend;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{ExitStatus, Outcome};

#[derive(Debug, Parser)]
#[command(name = "thinfilm", version, about = "Thin film with insoluble surfactant: certificates and simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the decay certificate for the configured initial data.
    Certify { config: PathBuf },
    /// Integrate in time and write diagnostics, snapshots and a report.
    Run { config: PathBuf },
    /// Truncation and step refinement study.
    Convergence {
        config: PathBuf,
        #[arg(long)]
        levels: usize,
        /// Truncation multiplier between levels.
        #[arg(long, default_value_t = 2)]
        m_factor: usize,
        /// Step divisor between levels.
        #[arg(long, default_value_t = 2.0)]
        dt_factor: f64,
    },
    /// Cross-check the spectral and nonlinear evaluators against independent references.
    Oracle {
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
}

pub fn execute(command: &Command) -> Outcome {
    match command {
        Command::Certify { config } => commands::cmd_certify(config),
        Command::Run { config } => commands::cmd_run(config),
        Command::Convergence {
            config,
            levels,
            m_factor,
            dt_factor,
        } => commands::cmd_convergence(config, *levels, *m_factor, *dt_factor),
        Command::Oracle {
            config,
            seed,
            tolerance_scale,
        } => commands::cmd_oracle(config.as_deref(), *seed, *tolerance_scale),
    }
}
