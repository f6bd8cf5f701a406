//! Figure presets. Each expands to one or more sweep configurations.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use starlab_core::fitters::{fit_exponential_with, FitOptions, FitResult};
use starlab_core::MhzParams;

use crate::config::{apply_override, ExperimentConfig, InitialState, SweepAxis, Tie};
use crate::error::{io_err, CliError, Result};
use crate::experiment::{bare_qutrit_decay, fit_trajectory, simulate, RunSettings};
use crate::report::{emit_report, write_json};
use crate::sweep::{run_sweep, SweepResult};

/// Output sampling step for presets. The step propagator is exact for any
/// step, so this only sets the trace resolution.
pub const PRESET_DT_US: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Fig3a,
    Fig3b,
    Fig4,
    FigA1,
    FigA2,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Self::Fig3a, Self::Fig3b, Self::Fig4, Self::FigA1, Self::FigA2];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fig3a => "fig3a",
            Self::Fig3b => "fig3b",
            Self::Fig4 => "fig4",
            Self::FigA1 => "figA1",
            Self::FigA2 => "figA2",
        }
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CliError::UnknownPreset(s.to_string()))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Command-line adjustments applied on top of a preset.
#[derive(Clone, Debug, Default)]
pub struct PresetOptions {
    /// Points per axis for the 2D scans.
    pub grid: Option<usize>,
    pub t_max_us: Option<f64>,
    pub dt_us: Option<f64>,
    pub burn_in_us: Option<f64>,
    pub workers: usize,
    pub store_trajectories: bool,
    /// `key=value` parameter overrides.
    pub overrides: Vec<String>,
    /// Replaces the swept values of the 1D presets.
    pub values: Option<Vec<f64>>,
    pub out_dir: PathBuf,
}

/// Operating point of the fig3 presets: W = 5, Omega = 1, kappa = 0.5 MHz, T1 = 20 us.
pub fn fig3_params() -> MhzParams {
    MhzParams {
        w_mhz: 5.0,
        omega1_mhz: 1.0,
        omega2_mhz: 1.0,
        kappa1_mhz: 0.5,
        kappa2_mhz: 0.5,
        t1_us: 20.0,
        ..MhzParams::default()
    }
}

/// Operating point of the fig4, figA1 and figA2 presets (the [`MhzParams`] defaults).
pub fn fig4_params() -> MhzParams {
    MhzParams::default()
}

pub const FIG4_T1_US: [f64; 6] = [20.0, 30.0, 40.0, 60.0, 80.0, 100.0];
pub const FIGA1_CHI_MHZ: [f64; 9] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];

/// Labelled sweep configurations for a preset. `figA2` has none; it is
/// handled by [`run_fig_a2`].
pub fn preset_configs(preset: Preset, opts: &PresetOptions) -> Result<Vec<(String, ExperimentConfig)>> {
    let base = |params: MhzParams, t_max: f64, initial: InitialState| -> Result<ExperimentConfig> {
        let mut params = params;
        for o in &opts.overrides {
            apply_override(&mut params, o)?;
        }
        Ok(ExperimentConfig {
            preset: Some(preset.name().into()),
            params,
            initial,
            t_max_us: opts.t_max_us.unwrap_or(t_max),
            dt_us: opts.dt_us.unwrap_or(PRESET_DT_US),
            burn_in_us: opts.burn_in_us,
            workers: opts.workers,
            store_trajectories: opts.store_trajectories,
            ..ExperimentConfig::default()
        })
    };
    let label = |s: InitialState| s.to_string().to_lowercase();
    let mut out = Vec::new();
    match preset {
        Preset::Fig3a => {
            let mut cfg = base(fig3_params(), 200.0, InitialState::Lx)?;
            let n = opts.grid.unwrap_or(21);
            let edge = 1.2 * cfg.params.w_mhz;
            cfg.axes = vec![
                SweepAxis::linear("nu0_mhz", -edge, edge, n),
                SweepAxis::linear("nu1_mhz", -edge, edge, n),
            ];
            cfg.burn_in_us.get_or_insert(20.0);
            out.push(("lx".into(), cfg));
        }
        Preset::Fig3b => {
            let mut cfg = base(fig3_params(), 200.0, InitialState::Lx)?;
            let n = opts.grid.unwrap_or(13);
            cfg.axes = vec![
                SweepAxis::log("w_mhz", 2.0, 20.0, n),
                SweepAxis::log("omega_mhz", 0.1, 5.0, n),
            ];
            cfg.ties = vec![Tie::OptimalDetuning, Tie::KappaEqualsOmega];
            cfg.burn_in_us.get_or_insert(20.0);
            out.push(("lx".into(), cfg));
        }
        Preset::Fig4 => {
            let t1 = opts.values.clone().unwrap_or_else(|| FIG4_T1_US.to_vec());
            for init in [InitialState::L0, InitialState::Lx] {
                let mut cfg = base(fig4_params(), 800.0, init)?;
                cfg.axes = vec![SweepAxis::list("t1_us", &t1)];
                out.push((label(init), cfg));
            }
        }
        Preset::FigA1 => {
            let chi = opts.values.clone().unwrap_or_else(|| FIGA1_CHI_MHZ.to_vec());
            for init in [InitialState::L0, InitialState::L1, InitialState::Lx] {
                let mut cfg = base(fig4_params(), 800.0, init)?;
                cfg.axes = vec![SweepAxis::list("chi_mhz", &chi)];
                out.push((label(init), cfg));
            }
        }
        Preset::FigA2 => {}
    }
    for (name, cfg) in &mut out {
        cfg.out_dir = opts.out_dir.join(preset.name()).join(name.as_str());
        cfg.validate()?;
    }
    Ok(out)
}

/// Process-fidelity traces and their fitted lifetimes.
#[derive(Clone, Debug, Serialize)]
pub struct FigA2Result {
    pub times: Vec<f64>,
    pub l0_z_parity: Vec<f64>,
    pub lx_x_fidelity: Vec<f64>,
    pub bare_e_population: Vec<f64>,
    pub fit_l0: Option<FitResult>,
    pub fit_lx: Option<FitResult>,
    pub fit_bare: Option<FitResult>,
    pub t1_us: f64,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
}

pub fn run_fig_a2(opts: &PresetOptions) -> Result<FigA2Result> {
    let mut params = fig4_params();
    for o in &opts.overrides {
        apply_override(&mut params, o)?;
    }
    let p = params.to_system()?;
    let t_max = opts.t_max_us.unwrap_or(800.0);
    let dt = opts.dt_us.unwrap_or(PRESET_DT_US);
    let burn_in = opts.burn_in_us.unwrap_or(0.1 * t_max);
    let l0 = RunSettings::new(InitialState::L0, t_max, dt, burn_in);
    let lx = RunSettings::new(InitialState::Lx, t_max, dt, burn_in);
    let tr0 = simulate(&p, &l0)?;
    let trx = simulate(&p, &lx)?;
    let bare = bare_qutrit_decay(params.t1_q1_us.unwrap_or(params.t1_us), t_max, dt)?;
    let bare_series = bare.series("e_population").unwrap_or(&[]).to_vec();
    let fit_bare = fit_exponential_with(
        &bare.times,
        &bare_series,
        &FitOptions {
            burn_in: Some(0.0),
            fix_offset: None,
        },
    )
    .ok();
    Ok(FigA2Result {
        l0_z_parity: tr0.series(crate::experiment::fitted_observable(InitialState::L0)).unwrap_or(&[]).to_vec(),
        lx_x_fidelity: trx.series(crate::experiment::fitted_observable(InitialState::Lx)).unwrap_or(&[]).to_vec(),
        fit_l0: fit_trajectory(&tr0, &l0).ok(),
        fit_lx: fit_trajectory(&trx, &lx).ok(),
        fit_bare,
        bare_e_population: bare_series,
        max_trace_error: tr0.hygiene.max_trace_error.max(trx.hygiene.max_trace_error),
        min_eigenvalue: tr0.hygiene.min_eigenvalue.min(trx.hygiene.min_eigenvalue),
        times: tr0.times,
        t1_us: params.t1_us,
    })
}

/// Preset outcome: labelled sweeps, or the fig A2 traces.
pub enum PresetOutput {
    Sweeps(Vec<(String, ExperimentConfig, SweepResult)>),
    Traces(FigA2Result),
}

/// Run a preset and write its files under `opts.out_dir/<preset>/`.
pub fn run_preset(preset: Preset, opts: &PresetOptions) -> Result<(PresetOutput, Vec<PathBuf>)> {
    let mut written = Vec::new();
    if preset == Preset::FigA2 {
        let res = run_fig_a2(opts)?;
        let dir = opts.out_dir.join(preset.name());
        written.push(write_traces(&dir, &res)?);
        let fits = dir.join("fits.json");
        write_json(
            &fits,
            &serde_json::json!({
                "t1_us": res.t1_us,
                "l0": res.fit_l0,
                "lx": res.fit_lx,
                "bare": res.fit_bare,
            }),
        )?;
        written.push(fits);
        return Ok((PresetOutput::Traces(res), written));
    }
    let mut sweeps = Vec::new();
    for (label, cfg) in preset_configs(preset, opts)? {
        let res = run_sweep(&cfg)?;
        written.extend(emit_report(&cfg.out_dir, &cfg, &res, serde_json::Value::Null)?);
        sweeps.push((label, cfg, res));
    }
    Ok((PresetOutput::Sweeps(sweeps), written))
}

fn write_traces(dir: &Path, res: &FigA2Result) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("traces.csv");
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["time_us", "l0_z_parity", "lx_x_fidelity", "bare_e_population"])?;
    for (k, t) in res.times.iter().enumerate() {
        w.write_record([
            t.to_string(),
            res.l0_z_parity[k].to_string(),
            res.lx_x_fidelity[k].to_string(),
            res.bare_e_population[k].to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("fig9".parse::<Preset>(), Err(CliError::UnknownPreset(_))));
    }

    #[test]
    fn fig3a_grid_contains_optimum_and_diagonal() {
        let cfgs = preset_configs(Preset::Fig3a, &PresetOptions::default()).unwrap();
        let cfg = &cfgs[0].1;
        assert_eq!(cfg.grid_size(), 441);
        let nu0 = cfg.axes[0].values();
        let target = cfg.params.w_mhz / 3f64.sqrt();
        let step = nu0[1] - nu0[0];
        assert!(nu0.iter().any(|v| (v - target).abs() <= step / 2.0));
        assert_eq!(cfg.axes[0].values(), cfg.axes[1].values());
    }

    #[test]
    fn fig4_runs_two_states() {
        let cfgs = preset_configs(Preset::Fig4, &PresetOptions::default()).unwrap();
        assert_eq!(cfgs.len(), 2);
        assert_eq!(cfgs[0].1.axes[0].values(), FIG4_T1_US.to_vec());
        assert_eq!(cfgs[1].1.initial, InitialState::Lx);
        assert_eq!(cfgs[0].1.t_max_us, 800.0);
    }

    #[test]
    fn overrides_apply() {
        let opts = PresetOptions {
            overrides: vec!["kappa_mhz=0.7".into()],
            ..Default::default()
        };
        let cfgs = preset_configs(Preset::FigA1, &opts).unwrap();
        assert_eq!(cfgs.len(), 3);
        assert_eq!(cfgs[2].1.params.kappa2_mhz, 0.7);
        let bad = PresetOptions {
            overrides: vec!["nonsense=1".into()],
            ..Default::default()
        };
        assert!(preset_configs(Preset::Fig4, &bad).is_err());
    }
}
