//! Experiment presets, the oracle verification suite, configuration files
//! and CSV output.
//!
//! Every experiment produces [`Row`]s: one per (sweep point, policy,
//! replication, metric), followed by `mean` and `stderr` summary rows.
//! Rows are sorted before writing, so output bytes depend only on the
//! configuration.

pub mod config;
pub mod presets;
pub mod verify;

use std::cmp::Ordering;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mdp::MdpError;
use crate::meanfield::MeanFieldError;
use crate::sim::{SimConfig, SimError, SimReport};

pub use config::{ExperimentConfig, SweepVariable};
pub use presets::{Fig2Params, Fig3aParams, Fig3bParams, SynthFieldParams};
pub use verify::{verify, CheckResult, VerifyOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
}

impl ExperimentError {
    /// True for errors caused by bad inputs rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, ExperimentError::Io { .. } | ExperimentError::Csv(_))
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "preset",
    "seed",
    "replication",
    "sweep_value",
    "policy",
    "metric",
    "value",
];

/// One CSV record. `replication` is the replication number, or `mean` /
/// `stderr` for summary rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub preset: String,
    pub seed: u64,
    pub replication: String,
    pub sweep_value: f64,
    pub policy: String,
    pub metric: String,
    pub value: f64,
}

fn replication_key(r: &str) -> (u8, u64) {
    match r.parse::<u64>() {
        Ok(k) => (0, k),
        Err(_) if r == "mean" => (1, 0),
        Err(_) => (2, 0),
    }
}

/// Deterministic output order.
pub fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| {
        a.preset
            .cmp(&b.preset)
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.policy.cmp(&b.policy))
            .then(a.metric.cmp(&b.metric))
            .then(replication_key(&a.replication).cmp(&replication_key(&b.replication)))
            .then(a.value.partial_cmp(&b.value).unwrap_or(Ordering::Equal))
    });
}

/// Writes rows with the fixed header to any writer.
pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| ExperimentError::Io {
        path: PathBuf::from("<csv>"),
        source: e,
    })?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> Result<String, ExperimentError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub fn write_csv_file(rows: &[Row], path: &Path) -> Result<(), ExperimentError> {
    let io = |e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let file = std::fs::File::create(path).map_err(io)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard error of a difference of two independent means.
pub fn pooled_stderr(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Appends `mean` and `stderr` rows for every (sweep point, policy, metric)
/// group of per-replication rows.
pub fn add_summaries(rows: &mut Vec<Row>) {
    sort_rows(rows);
    let mut summaries = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let head = &rows[i];
        let mut j = i;
        let mut vals = Vec::new();
        while j < rows.len()
            && rows[j].preset == head.preset
            && rows[j].sweep_value == head.sweep_value
            && rows[j].policy == head.policy
            && rows[j].metric == head.metric
        {
            if replication_key(&rows[j].replication).0 == 0 {
                vals.push(rows[j].value);
            }
            j += 1;
        }
        if !vals.is_empty() {
            let (m, se) = mean_stderr(&vals);
            for (tag, v) in [("mean", m), ("stderr", se)] {
                summaries.push(Row {
                    replication: tag.to_string(),
                    value: v,
                    ..head.clone()
                });
            }
        }
        i = j;
    }
    rows.extend(summaries);
    sort_rows(rows);
}

/// Looks up a summary value.
pub fn summary(
    rows: &[Row],
    sweep_value: f64,
    policy: &str,
    metric: &str,
    which: &str,
) -> Option<f64> {
    rows.iter()
        .find(|r| {
            r.sweep_value == sweep_value
                && r.policy == policy
                && r.metric == metric
                && r.replication == which
        })
        .map(|r| r.value)
}

/// A labelled simulation job.
#[derive(Debug, Clone)]
pub struct Job {
    pub sweep_value: f64,
    pub policy: String,
    pub replication: u32,
    pub config: SimConfig,
}

/// Runs jobs in parallel and returns reports in job order.
pub fn run_jobs(jobs: &[Job]) -> Result<Vec<SimReport>, ExperimentError> {
    jobs.par_iter()
        .map(|j| crate::sim::run(&j.config).map_err(ExperimentError::from))
        .collect()
}

/// Turns job reports into per-replication metric rows.
pub fn report_rows(preset: &str, seed: u64, jobs: &[Job], reports: &[SimReport]) -> Vec<Row> {
    let mut rows = Vec::with_capacity(jobs.len() * 2);
    for (job, rep) in jobs.iter().zip(reports) {
        let mut push = |metric: &str, value: f64| {
            rows.push(Row {
                preset: preset.to_string(),
                seed,
                replication: job.replication.to_string(),
                sweep_value: job.sweep_value,
                policy: job.policy.clone(),
                metric: metric.to_string(),
                value,
            })
        };
        push("avg_weighted_error", rep.avg_weighted_error);
        push("avg_aoi", rep.avg_aoi);
        if let Some(f) = rep.fraction_at_threshold {
            push("fraction_at_threshold", f);
        }
    }
    rows
}
