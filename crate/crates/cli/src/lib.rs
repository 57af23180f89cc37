//! Command-line front end for `lockwalk-core`: configuration, the
//! construction cache, trajectory dumps and the CSV/SVG/markdown outputs.

pub mod cache;
pub mod commands;
pub mod config;
pub mod dump;
pub mod error;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "lockwalk", version, about = "Random walks with a locked tail on lamplighter-type groups")]
pub struct Cli {
    /// TOML configuration; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub preset: Option<config::Preset>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub levels: Option<u32>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sampling. Output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Build and verify the construction, then cache it.
    Build,
    /// Sample trajectories and dump the first few.
    Sample,
    /// Total-variation curves of the left walk.
    Tv,
    /// Tail functional, histograms and the perturbation experiment.
    Tau,
    /// Re-check the cached construction and the measure normalization.
    Verify,
    /// Recompute everything into report.md, tv.svg and tau.svg.
    Report,
}

impl Cli {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.preset = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.levels {
            cfg.levels = l;
        }
        if let Some(o) = &self.out {
            cfg.out.clone_from(o);
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<String> {
    let cfg = cli.resolve()?;
    match cli.command {
        Command::Build => commands::build(&cfg),
        Command::Sample => commands::sample(&cfg),
        Command::Tv => commands::tv(&cfg),
        Command::Tau => commands::tau_cmd(&cfg),
        Command::Verify => commands::verify(&cfg),
        Command::Report => commands::report(&cfg),
    }
}
