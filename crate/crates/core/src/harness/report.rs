//! CSV tables and JSON sidecars.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::sweep::{SweepOutput, SweepRow};
use crate::error::Result;
use crate::io::format_f64;

pub const SWEEP_COLUMNS: [&str; 10] =
    ["solver", "reg_strength", "rho_model", "e_gen", "e_sel", "sigma_sel", "n_members", "n_failed", "valid", "config_hash"];

/// Exact float text; missing and NaN values become empty cells.
pub fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format_f64(v)
    }
}

pub fn opt_cell(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

pub fn write_table<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header.iter().map(|h| h.as_ref()))?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Cells for [`SWEEP_COLUMNS`].
pub fn sweep_cells(row: &SweepRow, config_hash: &str) -> Vec<String> {
    vec![
        row.solver.to_string(),
        cell(row.reg_strength),
        cell(row.rho_model),
        cell(row.e_gen),
        opt_cell(row.e_sel),
        opt_cell(row.sigma_sel),
        row.n_members.to_string(),
        row.n_failed.to_string(),
        row.valid.to_string(),
        config_hash.to_string(),
    ]
}

/// Writes `sweep.csv` and the `sweep.json` sidecar into `dir`.
pub fn write_sweep(out: &SweepOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let rows: Vec<Vec<String>> =
        out.curves.iter().flat_map(|c| c.rows.iter().map(|r| sweep_cells(r, &out.config_hash))).collect();
    let csv_path = dir.join("sweep.csv");
    write_table(&csv_path, &SWEEP_COLUMNS, &rows)?;
    let json_path = dir.join("sweep.json");
    write_json(&json_path, out)?;
    Ok(vec![csv_path, json_path])
}
