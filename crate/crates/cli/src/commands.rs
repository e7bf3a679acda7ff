use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::experiment::Experiment;
use crate::ledger::{analytic_ledger, render, LedgerRow};
use crate::output::{create_run_dir, write_run, write_sweep, Manifest};

/// Options shared by `run` and `sweep`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub jobs: Option<usize>,
}

const DEFAULT_OUT: &str = "runs";

fn resolve(config: &Path, opts: &RunOptions) -> CliResult<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = opts.seed_override {
        cfg = cfg.with_seed(seed);
    }
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok((cfg, out))
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

/// Executes one federation run; returns the run directory.
pub fn cmd_run(config: &Path, opts: &RunOptions) -> CliResult<PathBuf> {
    let (cfg, out) = resolve(config, opts)?;
    let exp = Experiment::prepare(&cfg)?;
    let outcome = with_jobs(opts.jobs, || exp.run())?;
    let dir = create_run_dir(&out, "run")?;
    write_run(&dir, &exp, &cfg.fed, &outcome)?;
    Ok(dir)
}

/// Runs methods × rates from the config's sweep section; returns the
/// sweep directory holding sweep.csv and one subdirectory per cell.
pub fn cmd_sweep(config: &Path, opts: &RunOptions) -> CliResult<PathBuf> {
    let (cfg, out) = resolve(config, opts)?;
    let exp = Experiment::prepare(&cfg)?;
    let cells = with_jobs(opts.jobs, || exp.sweep(&cfg.sweep.methods, &cfg.sweep.q))?;
    let dir = create_run_dir(&out, "sweep")?;
    write_sweep(&dir, &exp, &cells)?;
    Ok(dir)
}

/// Table for completed runs.
pub fn cmd_ledger(manifests: &[PathBuf]) -> CliResult<String> {
    let rows = manifests
        .iter()
        .map(|p| Manifest::load(p).map(|m| LedgerRow::from_manifest(&m)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(render(&rows))
}

/// Table for a hypothetical fully prunable model of `model_mb` megabytes.
pub fn cmd_ledger_analytic(model_mb: f64, clients: usize, rounds: usize, warmup: usize, rates: &[f64]) -> CliResult<String> {
    if !(model_mb > 0.0) || clients == 0 || warmup == 0 || warmup > rounds {
        return Err(crate::error::CliError::config(
            "ledger",
            "need model size > 0, clients >= 1 and 1 <= warmup <= rounds",
        ));
    }
    let bytes = (model_mb * fedx_core::federation::MEGABYTE).round() as u64;
    let rates = if rates.is_empty() { &[0.0][..] } else { rates };
    let rows = rates
        .iter()
        .map(|&q| {
            Ok(LedgerRow {
                label: "analytic".into(),
                q,
                warmup,
                totals: analytic_ledger(bytes, clients, rounds, warmup, q)?.totals(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(render(&rows))
}
