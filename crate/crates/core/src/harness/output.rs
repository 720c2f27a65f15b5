//! CSV and run-manifest writers.
//!
//! Aggregate CSV columns, in order:
//! `algorithm,k_s,omega,power_w,power_dbm,trials,excluded,mean_sum_rate,std_err,load`.
//! Per-trial CSV columns:
//! `trial,algorithm,k_s,omega,power_w,sum_rate,load,selected,scores`, where
//! `selected` and `scores` are `;`-separated and an empty `sum_rate` marks an
//! excluded trial.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{dbm, AggregateStats, ExperimentConfig, LoadRow, TrialResult};
use crate::error::Result;

#[derive(Serialize)]
struct AggregateRow<'a> {
    algorithm: &'a str,
    k_s: usize,
    omega: u32,
    power_w: f64,
    power_dbm: f64,
    trials: usize,
    excluded: usize,
    mean_sum_rate: f64,
    std_err: f64,
    load: u64,
}

#[derive(Serialize)]
struct TrialRow<'a> {
    trial: usize,
    algorithm: &'a str,
    k_s: usize,
    omega: u32,
    power_w: f64,
    sum_rate: Option<f64>,
    load: u64,
    selected: String,
    scores: String,
}

fn joined<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_aggregate_csv<W: Write>(writer: W, cells: &[AggregateStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in cells {
        w.serialize(AggregateRow {
            algorithm: c.algorithm.name(),
            k_s: c.k_s,
            omega: c.omega,
            power_w: c.power_w,
            power_dbm: dbm(c.power_w),
            trials: c.trials,
            excluded: c.excluded,
            mean_sum_rate: c.mean,
            std_err: c.std_err,
            load: c.load,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trials_csv<W: Write>(writer: W, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in trials {
        w.serialize(TrialRow {
            trial: t.trial,
            algorithm: t.algorithm.name(),
            k_s: t.k_s,
            omega: t.omega,
            power_w: t.power_w,
            sum_rate: t.sum_rate,
            load: t.load,
            selected: joined(&t.selected),
            scores: joined(&t.scores),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_load_csv<W: Write>(writer: W, rows: &[LoadRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

/// `<stem>.trials.csv` next to the aggregate CSV.
pub fn trials_path(out: &Path) -> PathBuf {
    sidecar(out, ".trials.csv")
}

/// `<stem>.manifest.txt` next to the aggregate CSV.
pub fn manifest_path(out: &Path) -> PathBuf {
    sidecar(out, ".manifest.txt")
}

/// Records what produced an output: command, config hash, seed, code version.
///
/// The hash ignores `output`, so the same experiment written to two places
/// yields identical manifests.
pub fn write_manifest<W: Write>(
    mut writer: W,
    command: &str,
    config: &ExperimentConfig,
) -> Result<()> {
    let canonical = ExperimentConfig {
        output: None,
        ..config.clone()
    }
    .to_toml_string()?;
    let digest = Sha256::digest(canonical.as_bytes());
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    writeln!(writer, "command = {command}")?;
    writeln!(
        writer,
        "code_version = {} {}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    )?;
    writeln!(writer, "config_schema_version = {}", config.schema_version)?;
    writeln!(writer, "config_sha256 = {hash}")?;
    writeln!(writer, "base_seed = {}", config.base_seed)?;
    writeln!(writer, "trials = {}", config.trials)?;
    writeln!(writer, "rate_mode = {:?}", config.mode)?;
    writeln!(writer, "gus_variant = {:?}", config.gus_variant)?;
    writeln!(writer, "csi = {:?}", config.csi)?;
    Ok(())
}

/// Writes the aggregate CSV, per-trial sidecar and manifest for `out`.
pub fn write_outputs(
    out: &Path,
    command: &str,
    config: &ExperimentConfig,
    result: &super::ExperimentOutput,
) -> Result<()> {
    write_aggregate_csv(std::fs::File::create(out)?, &result.cells)?;
    write_trials_csv(std::fs::File::create(trials_path(out))?, &result.trials)?;
    write_manifest(std::fs::File::create(manifest_path(out))?, command, config)?;
    Ok(())
}
