use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{BoxRow, Cell, FailureRow, SingleRun, SweepRow, SweepSummary};
use crate::error::Result;

pub const COEFFICIENTS_CSV: &str = "coefficients.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const BOXPLOT_CSV: &str = "boxplot.csv";
pub const FAILURES_CSV: &str = "failures.csv";
pub const CONFIG_JSON: &str = "config.json";

/// One line of `coefficients.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub method: String,
    pub dim: usize,
    pub term: String,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub pvalue: Option<f64>,
    pub post_null_prob: Option<f64>,
    pub selected: Option<bool>,
    pub inclusion_prob: Option<f64>,
}

/// Creates `dir` if needed and checks that files can be written there.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".sparseode-write-check");
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)?;
    Ok(())
}

/// Writes the fully resolved configuration next to the results.
pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let path = dir.join(CONFIG_JSON);
    fs::write(&path, cfg.to_json())?;
    Ok(path)
}

pub fn coefficient_records(run: &SingleRun) -> Vec<CoefficientRecord> {
    run.cells
        .iter()
        .filter_map(|c: &Cell| c.result.as_ref().ok())
        .flat_map(|rep| {
            rep.rows.iter().map(move |r| CoefficientRecord {
                method: rep.method.as_str().into(),
                dim: rep.dim + 1,
                term: r.term.clone(),
                estimate: r.estimate,
                stderr: r.std_err,
                ci_lo: r.ci_lo,
                ci_hi: r.ci_hi,
                pvalue: r.p_value,
                post_null_prob: r.post_null_prob,
                selected: r.selected,
                inclusion_prob: r.inclusion,
            })
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

const COEFFICIENT_HEADER: [&str; 11] = [
    "method",
    "dim",
    "term",
    "estimate",
    "stderr",
    "ci_lo",
    "ci_hi",
    "pvalue",
    "post_null_prob",
    "selected",
    "inclusion_prob",
];
const SWEEP_HEADER: [&str; 8] = ["grid_var", "grid_value", "method", "dim", "term", "sel_freq", "success_rate", "n_ok"];
const BOXPLOT_HEADER: [&str; 8] = [
    "grid_var",
    "grid_value",
    "method",
    "dim",
    "term",
    "replicate",
    "estimate",
    "selected",
];
const FAILURE_HEADER: [&str; 7] = ["grid_var", "grid_value", "method", "dim", "replicate", "numerical", "message"];

pub fn write_coefficients(path: &Path, records: &[CoefficientRecord]) -> Result<()> {
    write_rows(path, records, &COEFFICIENT_HEADER)
}

pub fn read_coefficients(path: &Path) -> Result<Vec<CoefficientRecord>> {
    read_rows(path)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, rows, &SWEEP_HEADER)
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    read_rows(path)
}

pub fn write_boxplot(path: &Path, rows: &[BoxRow]) -> Result<()> {
    write_rows(path, rows, &BOXPLOT_HEADER)
}

pub fn read_boxplot(path: &Path) -> Result<Vec<BoxRow>> {
    read_rows(path)
}

pub fn write_failures(path: &Path, rows: &[FailureRow]) -> Result<()> {
    write_rows(path, rows, &FAILURE_HEADER)
}

/// `sweep.csv`, `boxplot.csv` and `failures.csv` in `dir`.
pub fn write_summary(dir: &Path, summary: &SweepSummary) -> Result<Vec<PathBuf>> {
    let paths = vec![dir.join(SWEEP_CSV), dir.join(BOXPLOT_CSV), dir.join(FAILURES_CSV)];
    write_sweep(&paths[0], &summary.rows)?;
    write_boxplot(&paths[1], &summary.boxplot)?;
    write_failures(&paths[2], &summary.failures)?;
    Ok(paths)
}

pub fn read_summary(dir: &Path) -> Result<SweepSummary> {
    let failures = dir.join(FAILURES_CSV);
    Ok(SweepSummary {
        rows: read_sweep(&dir.join(SWEEP_CSV))?,
        boxplot: read_boxplot(&dir.join(BOXPLOT_CSV))?,
        failures: if failures.exists() { read_rows(&failures)? } else { Vec::new() },
    })
}
