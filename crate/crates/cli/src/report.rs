//! `sweep.csv`, `meta.json` and per-point trajectory files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{io_err, Result};
use crate::sweep::SweepResult;

pub const UNITS: &str = "parameter files and CSV axes are in MHz (f = omega/2pi) and us; \
internally every MHz value, including resonator linewidths, is multiplied by 2pi to give rad/us; \
gamma = 1/T1; lifetimes in us";

pub const SWEEP_COLUMNS: [&str; 9] = [
    "T_L_us",
    "T_L_stderr_us",
    "A",
    "C",
    "rms_residual",
    "predicted_T_L_us",
    "max_trace_error",
    "min_eigenvalue",
    "fit_error",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub units: String,
    pub code_version: String,
    pub n_points: usize,
    pub runtime_s: f64,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    /// Preset-specific results.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: std::io::Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string()];
    header.extend(result.axis_names.iter().cloned());
    header.extend(SWEEP_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for row in &result.rows {
        let s = &row.summary;
        let f = s.fit.as_ref();
        let mut rec = vec![row.index.to_string()];
        rec.extend(row.coords.iter().map(|c| c.to_string()));
        rec.push(opt(f.map(|f| f.t_l)));
        rec.push(opt(f.map(|f| f.stderr_t_l)));
        rec.push(opt(f.map(|f| f.a)));
        rec.push(opt(f.map(|f| f.c)));
        rec.push(opt(f.map(|f| f.rms_residual)));
        rec.push(opt(s.predicted_t_l_us));
        rec.push(s.max_trace_error.to_string());
        rec.push(s.min_eigenvalue.to_string());
        rec.push(s.fit_error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err("sweep.csv"))?;
    Ok(())
}

pub fn build_meta(cfg: &ExperimentConfig, result: &SweepResult, extra: serde_json::Value) -> Result<Meta> {
    Ok(Meta {
        config: cfg.clone(),
        config_sha256: config_hash(cfg)?,
        units: UNITS.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        n_points: result.rows.len(),
        runtime_s: result.runtime_s,
        max_trace_error: result
            .rows
            .iter()
            .map(|r| r.summary.max_trace_error)
            .fold(0.0, f64::max),
        min_eigenvalue: result
            .rows
            .iter()
            .map(|r| r.summary.min_eigenvalue)
            .fold(f64::INFINITY, f64::min),
        extra,
    })
}

/// Writes `sweep.csv`, `meta.json` and, if stored, `trajectories/point_<i>.csv`
/// into `dir`. Returns the paths written.
pub fn emit_report(
    dir: &Path,
    cfg: &ExperimentConfig,
    result: &SweepResult,
    extra: serde_json::Value,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let csv_path = dir.join("sweep.csv");
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_sweep_csv(result, file)?;
    written.push(csv_path);

    let meta_path = dir.join("meta.json");
    let meta = build_meta(cfg, result, extra)?;
    let text = serde_json::to_string_pretty(&meta)?;
    fs::write(&meta_path, text + "\n").map_err(io_err(&meta_path))?;
    written.push(meta_path);

    if !result.trajectories.is_empty() {
        let tdir = dir.join("trajectories");
        fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        for (row, traj) in result.rows.iter().zip(&result.trajectories) {
            let path = tdir.join(format!("point_{:04}.csv", row.index));
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            traj.write_csv(file)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn read_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}
