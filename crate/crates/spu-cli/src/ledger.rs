//! CSV artifacts: fixed column order, 17-significant-digit floats, and a
//! header block echoing the schema version and the full run configuration.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::config::RunConfig;
#[cfg(test)]
use crate::config::SCHEMA_VERSION;

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Assemble a CSV document: commented header echoing the configuration
/// (whose first line carries the schema version), one column-name row, then
/// the data rows.
pub fn render_csv(config: &RunConfig, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for line in config.to_text().lines() {
        writeln!(out, "# {line}").unwrap();
    }
    writeln!(out, "{}", columns.join(",")).unwrap();
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

pub fn write_csv(
    path: &Path,
    config: &RunConfig,
    columns: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(render_csv(config, columns, rows).as_bytes())
}

/// Column order of the per-branch sample ledger.
pub const LEDGER_COLUMNS: &[&str] = &[
    "run_id",
    "beta",
    "m",
    "n",
    "k",
    "z_mean",
    "z_stderr",
    "obs_mean",
    "obs_stderr",
    "chain_steps",
    "burn_in",
    "relaxation",
    "tau",
    "tau_saturated",
    "dead",
    "resampled",
    "seed",
    "pair_index",
];

/// One parsed ledger row (the subset diagnose needs to replay a record).
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub run_id: u64,
    pub beta: f64,
    pub m: usize,
    pub n: usize,
    pub k: u8,
    pub z_mean: f64,
    pub z_stderr: f64,
    pub obs_mean: f64,
    pub obs_stderr: f64,
    pub chain_steps: usize,
    pub burn_in: usize,
    pub dead: bool,
    pub resampled: u32,
    pub seed: u64,
    pub pair_index: u64,
}

/// Parse a ledger CSV produced by [`write_csv`] with [`LEDGER_COLUMNS`].
pub fn parse_ledger(text: &str) -> Result<Vec<LedgerRow>, String> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.split(',').count() != LEDGER_COLUMNS.len() {
                return Err(format!("unexpected ledger header: {line}"));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != LEDGER_COLUMNS.len() {
            return Err(format!("short ledger row: {line}"));
        }
        let parse_f = |idx: usize| -> Result<f64, String> {
            fields[idx]
                .parse::<f64>()
                .map_err(|e| format!("row '{line}': {e}"))
        };
        let parse_u = |idx: usize| -> Result<u64, String> {
            fields[idx]
                .parse::<u64>()
                .map_err(|e| format!("row '{line}': {e}"))
        };
        rows.push(LedgerRow {
            run_id: parse_u(0)?,
            beta: parse_f(1)?,
            m: parse_u(2)? as usize,
            n: parse_u(3)? as usize,
            k: parse_u(4)? as u8,
            z_mean: parse_f(5)?,
            z_stderr: parse_f(6)?,
            obs_mean: parse_f(7)?,
            obs_stderr: parse_f(8)?,
            chain_steps: parse_u(9)? as usize,
            burn_in: parse_u(10)? as usize,
            dead: fields[14] == "true",
            resampled: parse_u(15)? as u32,
            seed: parse_u(16)?,
            pair_index: parse_u(17)?,
        });
    }
    Ok(rows)
}
