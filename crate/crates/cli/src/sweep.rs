//! Grid expansion and parallel execution. Results are ordered by grid
//! index whatever the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use starlab_core::lindblad::Trajectory;
use starlab_core::MhzParams;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiment::{run_point, PointSummary, RunSettings};

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub coords: Vec<f64>,
    pub params: MhzParams,
}

/// Row-major expansion: the last axis varies fastest.
pub fn expand_grid(cfg: &ExperimentConfig) -> Result<Vec<GridPoint>> {
    let values: Vec<Vec<f64>> = cfg.axes.iter().map(|a| a.values()).collect();
    let total = cfg.grid_size();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut coords = vec![0.0; values.len()];
        for (k, v) in values.iter().enumerate().rev() {
            coords[k] = v[rem % v.len()];
            rem /= v.len();
        }
        let mut params = cfg.params.clone();
        for (axis, &x) in cfg.axes.iter().zip(&coords) {
            params.set(&axis.name, x)?;
        }
        for tie in &cfg.ties {
            tie.apply(&mut params);
        }
        points.push(GridPoint {
            index,
            coords,
            params,
        });
    }
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub index: usize,
    pub coords: Vec<f64>,
    pub summary: PointSummary,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub axis_names: Vec<String>,
    pub rows: Vec<PointRow>,
    /// Present only when trajectory storage was requested.
    pub trajectories: Vec<Trajectory>,
    pub runtime_s: f64,
}

impl SweepResult {
    pub fn best(&self) -> Option<&PointRow> {
        self.rows
            .iter()
            .filter(|r| r.summary.t_l().is_some())
            .max_by(|a, b| a.summary.t_l().partial_cmp(&b.summary.t_l()).unwrap())
    }

    pub fn t_l(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.summary.t_l()).collect()
    }
}

pub fn settings(cfg: &ExperimentConfig) -> RunSettings {
    RunSettings {
        fix_offset: cfg.fix_offset,
        ..RunSettings::new(cfg.initial, cfg.t_max_us, cfg.dt_us, cfg.burn_in())
    }
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let points = expand_grid(cfg)?;
    let s = settings(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Parse(format!("thread pool: {e}")))?;
    let keep = cfg.store_trajectories;
    let outcomes: Vec<Result<(PointRow, Option<Trajectory>)>> = pool.install(|| {
        points
            .par_iter()
            .map(|pt| {
                let (summary, traj) = run_point(&pt.params, &s)?;
                let row = PointRow {
                    index: pt.index,
                    coords: pt.coords.clone(),
                    summary,
                };
                Ok((row, keep.then_some(traj)))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut trajectories = Vec::new();
    for o in outcomes {
        let (row, traj) = o?;
        rows.push(row);
        trajectories.extend(traj);
    }
    Ok(SweepResult {
        axis_names: cfg.axes.iter().map(|a| a.name.clone()).collect(),
        rows,
        trajectories,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}
