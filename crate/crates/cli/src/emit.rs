//! CSV / JSON / binary writers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use codedopt::{Dataset, GridResult, GroundTruth, Trace};
use serde::Serialize;

use crate::CliError;

pub const TRACE_HEADER: &str = "trial,iter,rel_error,s_tau,mu_used";
pub const GRID_HEADER: &str = "m,s,trials,successes,success_rate,median_iters";

pub fn file_name(subcommand: &str, fingerprint: &str, suffix: Option<&str>, ext: &str) -> String {
    match suffix {
        Some(s) => format!("{subcommand}_{fingerprint}_{s}.{ext}"),
        None => format!("{subcommand}_{fingerprint}.{ext}"),
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(io_error(&path))?;
    Ok(path)
}

/// Pretty JSON with object keys in sorted order.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let sorted = serde_json::to_value(value).expect("result serializes");
    let mut text = serde_json::to_string_pretty(&sorted).expect("value serializes");
    text.push('\n');
    text
}

/// Rows for every iteration of every completed trial, in trial order.
pub fn trace_csv(fingerprint: &str, traces: &[(usize, Trace)]) -> String {
    let mut out = format!("# fingerprint={fingerprint}\n{TRACE_HEADER}\n");
    for (trial, trace) in traces {
        for r in &trace.records {
            writeln!(out, "{trial},{},{},{},{}", r.iter, r.rel_error, r.s_tau, r.mu_used).unwrap();
        }
    }
    out
}

pub fn grid_csv(fingerprint: &str, grid: &GridResult) -> String {
    let mut out = format!("# fingerprint={fingerprint}\n{GRID_HEADER}\n");
    for r in &grid.rows {
        writeln!(out, "{},{},{},{},{},{}", r.m, r.s, r.trials, r.successes, r.success_rate, r.median_iters).unwrap();
    }
    out
}

/// Little-endian `f64` bundle: `X` (row-major), then `y`, `w` and `θ*`.
pub fn dataset_bundle(data: &Dataset, truth: &GroundTruth) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (data.x.len() + 2 * data.n() + data.d()));
    let theta = truth.theta_star();
    let values = data.x.iter().chain(data.y.iter()).chain(data.w.iter()).chain(theta.iter());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
