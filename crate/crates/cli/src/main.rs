//! Command-line entry point.
//!
//! Exit status 0 means success and 1 a hard error. Status 2 means some items
//! of a batch failed; those are listed in `errors.json` in the output directory.

mod args;
mod cam;
mod config;
mod datasets;
mod eval;
mod failures;
mod prepare;
mod run;
mod selection;
mod train;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::Parser;

use args::{Cli, Command};
use config::ExperimentConfig;
use run::{digest_outputs, RunManifest, RUN_FORMAT};

/// Settings shared by every command.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub desk: bool,
    pub out: PathBuf,
}

/// What a command read and produced, recorded in the run manifest.
#[derive(Debug, Default)]
pub struct RunReport {
    pub datasets: BTreeMap<String, String>,
    /// Checkpoint name to parameter hash.
    pub provenance: BTreeMap<String, String>,
    pub failures: usize,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn set_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        anyhow::ensure!(n > 0, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn execute(command: Command, cfg: ExperimentConfig, desk: bool) -> Result<usize> {
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating output directory {}", out.display()))?;
    let ctx = Context { cfg, desk, out };
    log::info!("{} -> {}", command.name(), ctx.out.display());
    let report = match &command {
        Command::Prepare(a) => prepare::run(a, &ctx)?,
        Command::Train(a) => train::run(a, &ctx)?,
        Command::Eval(a) => eval::run(a, &ctx)?,
        Command::Cam(a) => cam::run(a, &ctx)?,
        Command::Replay(_) => unreachable!("replay is resolved before execution"),
    };
    let manifest = RunManifest {
        format: RUN_FORMAT,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command,
        desk: ctx.desk,
        workers: rayon::current_num_threads(),
        config: ctx.cfg.clone(),
        datasets: report.datasets,
        provenance: report.provenance,
        outputs: digest_outputs(&ctx.out)?,
    };
    manifest.write(&ctx.out)?;
    Ok(report.failures)
}

fn run(cli: Cli) -> Result<usize> {
    if let Command::Replay(r) = &cli.command {
        let m = RunManifest::read(&r.manifest)?;
        set_workers(cli.workers.or(Some(m.workers)))?;
        let mut cfg = m.config;
        if cli.out.is_some() {
            cfg.out = cli.out.clone();
        }
        log::info!("replaying `{}` from {}", m.command.name(), r.manifest.display());
        return execute(m.command, cfg, m.desk);
    }
    set_workers(cli.workers)?;
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    }
    .resolve(cli.seed, cli.out.clone())?;
    execute(cli.command, cfg, cli.desk)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} item(s) failed; see {}", failures::ERRORS_FILE);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
