//! Experiment runner: configuration, subcommands and result persistence.
//!
//! Every run writes `config.json` (the resolved configuration), the study's
//! CSV/JSON tables, each stamped with the SHA-256 of `config.json`, and last
//! `manifest.json`, which lists the result files with their own hashes and
//! the threshold checks.  Apart from `wall_time_s` in the manifest, two runs
//! of the same configuration produce identical bytes.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod studies;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use output::{OutputDir, RunManifest};

/// Output root used when neither `--out` nor `output` is given.
pub const DEFAULT_OUT: &str = "ostrovsky-out";
pub const OUT_ENV: &str = "OSTROVSKY_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "ostrovsky",
    version,
    about = "Numerical experiments for the Ostrovsky equation"
)]
pub struct Cli {
    /// JSON configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output` and $OSTROVSKY_OUT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Base seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Validate and print the resolved configuration without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the configured datum and check the solver gates.
    Evolve(Overrides),
    /// Measure the smoothing gain over a random-data ensemble.
    Smoothing(Overrides),
    /// Growth of the first Picard iterate on the counterexample families.
    Picard(Overrides),
    /// Residual of the normal-form identity against snapshot spacing.
    NfCheck(Overrides),
    /// Boundary-term ratios on random ensembles and the sharpness family.
    Bscan(Overrides),
    /// Distance to the KdV solution as the rotation parameter vanishes.
    KdvLimit(Overrides),
    /// Ratios of the convolution-sum lemma.
    LemmaCheck(Overrides),
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Dotted `key=value` overrides, e.g. `dispersion.gamma=0`.
    pub set: Vec<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Evolve(_) => "evolve",
            Command::Smoothing(_) => "smoothing",
            Command::Picard(_) => "picard",
            Command::NfCheck(_) => "nf-check",
            Command::Bscan(_) => "bscan",
            Command::KdvLimit(_) => "kdv-limit",
            Command::LemmaCheck(_) => "lemma-check",
        }
    }

    fn overrides(&self) -> &[String] {
        match self {
            Command::Evolve(o)
            | Command::Smoothing(o)
            | Command::Picard(o)
            | Command::NfCheck(o)
            | Command::Bscan(o)
            | Command::KdvLimit(o)
            | Command::LemmaCheck(o) => &o.set,
        }
    }
}

/// What a run produced.
#[derive(Debug)]
pub enum Outcome {
    DryRun { config: String },
    Done(Box<RunManifest>),
}

impl Cli {
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), self.command.overrides())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.validate()?;
        }
        Ok(cfg)
    }

    pub fn output_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = cli.resolve_config()?;
    let echo = cfg.echo()?;
    if cli.dry_run {
        return Ok(Outcome::DryRun { config: echo });
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building the worker pool")?;

    let start = Instant::now();
    let mut out = OutputDir::create(&cli.output_dir(&cfg), &echo)?;
    let checks = pool.install(|| match cli.command {
        Command::Evolve(_) => studies::run_evolve(&cfg, &mut out),
        Command::Smoothing(_) => studies::run_smoothing(&cfg, &mut out),
        Command::Picard(_) => studies::run_picard(&cfg, &mut out),
        Command::NfCheck(_) => studies::run_nf_check(&cfg, &mut out),
        Command::Bscan(_) => studies::run_bscan(&cfg, &mut out),
        Command::KdvLimit(_) => studies::run_kdv_limit(&cfg, &mut out),
        Command::LemmaCheck(_) => studies::run_lemma_check(&cfg, &mut out),
    })?;
    let manifest = out.finish(
        cli.command.name(),
        cfg.clone(),
        start.elapsed().as_secs_f64(),
        checks,
    )?;
    Ok(Outcome::Done(Box::new(manifest)))
}
