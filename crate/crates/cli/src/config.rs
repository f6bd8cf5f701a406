//! Experiment configuration, parameter files and sweep grids.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use starlab_core::MhzParams;

use crate::error::{io_err, CliError, Result};

/// Logical state the trajectory starts in (resonators in vacuum).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitialState {
    #[default]
    L0,
    L1,
    Lx,
}

impl FromStr for InitialState {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l0" => Ok(Self::L0),
            "l1" => Ok(Self::L1),
            "lx" => Ok(Self::Lx),
            _ => Err(CliError::Parse(format!("initial state `{s}`; expected L0, L1 or Lx"))),
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L0 => "L0",
            Self::L1 => "L1",
            Self::Lx => "Lx",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
    /// Values taken from `SweepAxis::list`.
    List,
}

/// One sweep dimension over a parameter-file key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub list: Vec<f64>,
}

impl SweepAxis {
    pub fn linear(name: &str, start: f64, stop: f64, points: usize) -> Self {
        Self {
            name: name.into(),
            start,
            stop,
            points,
            scale: Scale::Linear,
            list: Vec::new(),
        }
    }

    pub fn list(name: &str, values: &[f64]) -> Self {
        Self {
            name: name.into(),
            start: values.first().copied().unwrap_or(f64::NAN),
            stop: values.last().copied().unwrap_or(f64::NAN),
            points: values.len(),
            scale: Scale::List,
            list: values.to_vec(),
        }
    }

    pub fn log(name: &str, start: f64, stop: f64, points: usize) -> Self {
        Self {
            scale: Scale::Log,
            ..Self::linear(name, start, stop, points)
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.scale == Scale::List {
            return self.list.clone();
        }
        if self.points == 1 {
            return vec![self.start];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let f = i as f64 / last;
                match self.scale {
                    Scale::Linear => self.start + f * (self.stop - self.start),
                    Scale::Log => (self.start.ln() + f * (self.stop.ln() - self.start.ln())).exp(),
                    Scale::List => unreachable!(),
                }
            })
            .collect()
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !MhzParams::KEYS.contains(&self.name.as_str()) {
            out.push(format!("axis `{}` is not a parameter key", self.name));
        }
        if self.scale == Scale::List && self.list.len() != self.points {
            out.push(format!("axis `{}` lists {} values but declares {} points", self.name, self.list.len(), self.points));
        }
        if self.list.iter().any(|x| !x.is_finite()) {
            out.push(format!("axis `{}` has non-finite values", self.name));
        }
        if self.points == 0 {
            out.push(format!("axis `{}` needs at least one point", self.name));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            out.push(format!("axis `{}` has non-finite bounds", self.name));
        }
        if self.scale == Scale::Log && !(self.start > 0.0 && self.stop > 0.0) {
            out.push(format!("log axis `{}` needs positive bounds", self.name));
        }
        out
    }
}

/// `name:start:stop:points[:log]` or `name=v1,v2,...`.
impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some((name, list)) = s.split_once('=') {
            let values = list
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| CliError::Parse(format!("axis `{s}`; expected name=v1,v2,...")))?;
            return Ok(Self::list(name.trim(), &values));
        }
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::Parse(format!("axis `{s}`; expected name:start:stop:points[:log|linear]"));
        if !(4..=5).contains(&parts.len()) {
            return Err(bad());
        }
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
        let scale = match parts.get(4).map(|x| x.trim()) {
            None | Some("linear") | Some("lin") => Scale::Linear,
            Some("log") => Scale::Log,
            Some(_) => return Err(bad()),
        };
        Ok(Self {
            name: parts[0].trim().to_string(),
            start: num(parts[1])?,
            stop: num(parts[2])?,
            points: parts[3].trim().parse().map_err(|_| bad())?,
            scale,
            list: Vec::new(),
        })
    }
}

/// Parameter relations re-applied after every axis assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tie {
    /// `kappa_j = Omega_j`.
    KappaEqualsOmega,
    /// `nu0 = -nu1 = W/sqrt(3)`.
    OptimalDetuning,
}

impl Tie {
    pub fn apply(&self, p: &mut MhzParams) {
        match self {
            Tie::KappaEqualsOmega => {
                p.kappa1_mhz = p.omega1_mhz;
                p.kappa2_mhz = p.omega2_mhz;
            }
            Tie::OptimalDetuning => {
                p.nu0_mhz = p.w_mhz / 3f64.sqrt();
                p.nu1_mhz = -p.nu0_mhz;
            }
        }
    }
}

impl FromStr for Tie {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa_equals_omega" | "kappa=omega" => Ok(Self::KappaEqualsOmega),
            "optimal_detuning" | "nu=w/sqrt3" => Ok(Self::OptimalDetuning),
            _ => Err(CliError::Parse(format!(
                "tie `{s}`; expected kappa_equals_omega or optimal_detuning"
            ))),
        }
    }
}

pub const DEFAULT_DT_US: f64 = 0.01;
pub const DEFAULT_T_MAX_US: f64 = 200.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub params_file: Option<PathBuf>,
    /// Base parameters after the file and any overrides were applied.
    pub params: MhzParams,
    pub axes: Vec<SweepAxis>,
    pub ties: Vec<Tie>,
    pub initial: InitialState,
    pub t_max_us: f64,
    pub dt_us: f64,
    /// `None` uses the fitter default (first 10% of the run).
    pub burn_in_us: Option<f64>,
    pub fix_offset: Option<f64>,
    pub out_dir: PathBuf,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub store_trajectories: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: None,
            params_file: None,
            params: MhzParams::default(),
            axes: Vec::new(),
            ties: Vec::new(),
            initial: InitialState::L0,
            t_max_us: DEFAULT_T_MAX_US,
            dt_us: DEFAULT_DT_US,
            burn_in_us: None,
            fix_offset: None,
            out_dir: PathBuf::from("out"),
            workers: 0,
            store_trajectories: false,
        }
    }
}

impl ExperimentConfig {
    pub fn burn_in(&self) -> f64 {
        self.burn_in_us
            .unwrap_or(starlab_core::fitters::DEFAULT_BURN_IN_FRACTION * self.t_max_us)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max_us / self.dt_us).round() as usize
    }

    pub fn grid_size(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for axis in &self.axes {
            problems.extend(axis.problems());
        }
        for (i, a) in self.axes.iter().enumerate() {
            if self.axes[..i].iter().any(|b| b.name == a.name) {
                problems.push(format!("axis `{}` appears twice", a.name));
            }
        }
        if !(self.t_max_us > 0.0 && self.t_max_us.is_finite()) {
            problems.push(format!("t_max_us = {} must be > 0", self.t_max_us));
        }
        if !(self.dt_us > 0.0 && self.dt_us.is_finite()) {
            problems.push(format!("dt_us = {} must be > 0", self.dt_us));
        } else if self.dt_us > self.t_max_us {
            problems.push(format!("dt_us = {} exceeds t_max_us", self.dt_us));
        }
        let burn_in = self.burn_in();
        if !(burn_in >= 0.0) || burn_in >= self.t_max_us {
            problems.push(format!(
                "burn-in {burn_in} us must lie in [0, t_max_us = {})",
                self.t_max_us
            ));
        }
        if let Some(c) = self.fix_offset {
            if !c.is_finite() {
                problems.push("fix_offset must be finite".into());
            }
        }
        let mut base = self.params.clone();
        for tie in &self.ties {
            tie.apply(&mut base);
        }
        if let Err(e) = base.to_system() {
            problems.push(format!("base parameters: {e}"));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems))
        }
    }
}

/// Reads a flat `key = value` parameter file (TOML syntax, `#` comments)
/// on top of `base`. Keys are those of [`MhzParams::KEYS`] plus
/// `dispersive_form = "number_number" | "f_level"`.
pub fn load_params(path: &Path, base: MhzParams) -> Result<MhzParams> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_params(&text, base).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_params(text: &str, mut p: MhzParams) -> Result<MhzParams> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
    let mut problems = Vec::new();
    for (key, value) in &table {
        if key == "dispersive_form" {
            match value.as_str() {
                Some("number_number") => p.dispersive_form = starlab_core::starmodel::DispersiveForm::NumberNumber,
                Some("f_level") => p.dispersive_form = starlab_core::starmodel::DispersiveForm::FLevel,
                _ => problems.push(format!(
                    "dispersive_form must be \"number_number\" or \"f_level\", got {value}"
                )),
            }
            continue;
        }
        let number = match value {
            toml::Value::Float(x) => Some(*x),
            toml::Value::Integer(i) => Some(*i as f64),
            toml::Value::String(s) if s == "inf" => Some(f64::INFINITY),
            _ => None,
        };
        match number {
            Some(x) => {
                if let Err(e) = p.set(key, x) {
                    problems.push(e.to_string());
                }
            }
            None => problems.push(format!("`{key}` must be a number, got {value}")),
        }
    }
    if problems.is_empty() {
        Ok(p)
    } else {
        Err(CliError::Config(problems))
    }
}

/// `key=value` override from the command line.
pub fn apply_override(p: &mut MhzParams, spec: &str) -> Result<()> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Parse(format!("override `{spec}`; expected key=value")))?;
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::Parse(format!("override `{spec}`: `{v}` is not a number")))?;
    p.set(k.trim(), x)?;
    Ok(())
}
