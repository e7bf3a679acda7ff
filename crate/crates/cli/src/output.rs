use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fedx_core::federation::{to_mb, FederationOutcome, LedgerSummary, RoundRecord, RoundTraffic, Strategy};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{Experiment, Seeds, SweepCell};

pub const MANIFEST_VERSION: u32 = 1;

/// Formats `x` with six significant digits, shortest form.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    rounded.to_string()
}

/// Creates a fresh `<parent>/<prefix>-<timestamp>` directory, adding a
/// numeric suffix instead of ever reusing an existing path.
pub fn create_run_dir(parent: &Path, prefix: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{prefix}-{stamp}");
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(dir, e)),
        }
    }
    unreachable!("unbounded suffix search")
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(contents).map_err(|e| CliError::io(path, e))
}

pub fn rounds_csv(records: &[RoundRecord]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["round", "metric", "loss_mean", "sparsity", "uplink_MB", "downlink_MB", "saved_MB_cum"])?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.metric.map(sig6).unwrap_or_default(),
            sig6(r.loss_mean),
            sig6(r.sparsity),
            sig6(to_mb(r.uplink_bytes)),
            sig6(to_mb(r.downlink_bytes)),
            sig6(to_mb(r.saved_bytes_cum)),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::io("rounds.csv", e.into_error()))
}

pub fn sweep_csv(cells: &[SweepCell]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "q", "final_metric", "saved_MB"])?;
    for c in cells {
        w.write_record([
            c.strategy.name().to_string(),
            sig6(c.q),
            sig6(c.final_metric()),
            sig6(to_mb(c.outcome.ledger.totals().saved_bytes)),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::io("sweep.csv", e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub name: String,
    pub value: f64,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub strategy: Strategy,
    pub q: f64,
    pub warmup: usize,
    pub model_size_MB: f64,
    pub unpruned_total_MB: f64,
    pub actual_total_MB: f64,
    pub saved_MB: f64,
    pub mask_overhead_MB: f64,
    pub totals: LedgerSummary,
    pub per_round: Vec<RoundTraffic>,
}

/// Run summary. Contains nothing time- or path-dependent so identical
/// inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub parameter_count: usize,
    pub final_metric: Option<MetricEntry>,
    pub final_sparsity: f64,
    pub pruned_components: usize,
    pub ledger: LedgerReport,
}

impl Manifest {
    pub fn build(exp: &Experiment, fed: &fedx_core::federation::FedConfig, out: &FederationOutcome) -> Self {
        let totals = out.ledger.totals();
        let mut config = exp.config.clone();
        config.fed = fed.clone();
        Manifest {
            manifest_version: MANIFEST_VERSION,
            config,
            seeds: exp.seeds(),
            parameter_count: out.network.params().len(),
            final_metric: out.final_metrics.map(|m| MetricEntry {
                name: m.name().to_string(),
                value: m.value,
            }),
            final_sparsity: out.mask.sparsity(),
            pruned_components: out.mask.pruned_components().len(),
            ledger: LedgerReport {
                strategy: fed.strategy,
                q: fed.q,
                warmup: fed.warmup,
                model_size_MB: totals.model_size_mb(),
                unpruned_total_MB: totals.unpruned_total_mb(),
                actual_total_MB: to_mb(totals.actual_total_bytes),
                saved_MB: totals.saved_mb(),
                mask_overhead_MB: to_mb(totals.mask_overhead_bytes),
                totals,
                per_round: out.ledger.rounds.clone(),
            },
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::MissingInput {
            path: path.to_path_buf(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::config(format!("{}:{}", path.display(), e.path()), e.into_inner().to_string()))
    }
}

/// Writes rounds.csv, manifest.json, mask.json and relevance.json into `dir`.
/// relevance.json holds `null` for strategies that use no relevance scores.
pub fn write_run(
    dir: &Path,
    exp: &Experiment,
    fed: &fedx_core::federation::FedConfig,
    out: &FederationOutcome,
) -> CliResult<()> {
    write_file(&dir.join("rounds.csv"), &rounds_csv(&out.records)?)?;
    let manifest = Manifest::build(exp, fed, out);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&dir.join("manifest.json"), text.as_bytes())?;
    let mut mask = out.mask.to_json()?;
    mask.push('\n');
    write_file(&dir.join("mask.json"), mask.as_bytes())?;
    let mut rel = match &out.relevance {
        Some(r) => r.to_json()?,
        None => "null".to_string(),
    };
    rel.push('\n');
    write_file(&dir.join("relevance.json"), rel.as_bytes())
}

pub fn write_sweep(dir: &Path, exp: &Experiment, cells: &[SweepCell]) -> CliResult<()> {
    for c in cells {
        let cell_dir = dir.join(format!("{}-q{}", c.strategy.name(), sig6(c.q)));
        fs::create_dir(&cell_dir).map_err(|e| CliError::io(&cell_dir, e))?;
        let fed = fedx_core::federation::FedConfig {
            strategy: c.strategy,
            q: c.q,
            ..exp.config.fed.clone()
        };
        write_run(&cell_dir, exp, &fed, &c.outcome)?;
    }
    write_file(&dir.join("sweep.csv"), &sweep_csv(cells)?)
}
