//! Per-epoch metrics as CSV, one row per epoch, header first.

use std::fs::{self, OpenOptions};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Column order of the metrics file.
pub const COLUMNS: [&str; 12] = [
    "epoch",
    "env_steps",
    "critic_1step",
    "critic_nstep",
    "actor",
    "bc",
    "aux",
    "eval_return",
    "eval_success",
    "buffer_occupancy",
    "demo_fraction",
    "wall_time_s",
];

/// Epoch 0 is the pre-training phase. Loss columns are means over the
/// updates of the epoch and are empty when there were none; eval columns are
/// empty when no episode was run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub env_steps: u64,
    pub critic_1step: Option<f64>,
    pub critic_nstep: Option<f64>,
    pub actor: Option<f64>,
    pub bc: Option<f64>,
    pub aux: Option<f64>,
    pub eval_return: Option<f64>,
    pub eval_success: Option<f64>,
    pub buffer_occupancy: usize,
    pub demo_fraction: f64,
    pub wall_time_s: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Format(format!("{}: {e}", path.display()))
}

/// Creates (or truncates) the file and writes the header.
pub fn create(path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(COLUMNS).map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn append(path: &Path, row: &MetricsRow) -> Result<()> {
    let f = OpenOptions::new().append(true).open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
    w.serialize(row).map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if !header.iter().eq(COLUMNS) {
        return Err(HarnessError::Format(format!("{}: unexpected metrics header", path.display())));
    }
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| csv_err(path, e))
}

/// Rewrites the file keeping only rows up to and including `epoch`.
pub fn truncate_after(path: &Path, epoch: usize) -> Result<()> {
    let rows = read(path)?;
    let tmp = path.with_extension("csv.tmp");
    create(&tmp)?;
    for row in rows.iter().filter(|r| r.epoch <= epoch) {
        append(&tmp, row)?;
    }
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
