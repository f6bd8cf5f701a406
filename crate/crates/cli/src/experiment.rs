//! Single-point simulation: build the rotating-frame model, propagate,
//! fit the logical observable and attach the rate-model prediction.

use serde::{Deserialize, Serialize};
use starlab_core::codes::codewords;
use starlab_core::fitters::{fit_exponential_with, FitOptions, FitResult};
use starlab_core::lindblad::{
    liouvillian, process_observables, propagate_fixed, Channel, Hygiene, PropagationOptions,
    Trajectory, PROCESS_X, PROCESS_Z,
};
use starlab_core::qspace::{basis_ket, transition, ModeLayout, Operator, State, E, G};
use starlab_core::rates::{predict, RateSet};
use starlab_core::starmodel::{build_rot_hamiltonian, collapse_channels};
use starlab_core::{MhzParams, SystemParams};

use crate::config::InitialState;
use crate::error::Result;

/// Time grid and fit settings shared by every point of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSettings {
    pub initial: InitialState,
    pub t_max_us: f64,
    pub dt_us: f64,
    pub burn_in_us: f64,
    pub fix_offset: Option<f64>,
    pub store_states: bool,
}

impl RunSettings {
    pub fn new(initial: InitialState, t_max_us: f64, dt_us: f64, burn_in_us: f64) -> Self {
        Self {
            initial,
            t_max_us,
            dt_us,
            burn_in_us,
            fix_offset: None,
            store_states: false,
        }
    }

    fn n_steps(&self) -> usize {
        (self.t_max_us / self.dt_us).round() as usize
    }
}

pub fn initial_state(initial: InitialState) -> Result<State> {
    let cw = codewords(&ModeLayout::star())?;
    Ok(match initial {
        InitialState::L0 => cw.l0,
        InitialState::L1 => cw.l1,
        InitialState::Lx => cw.lx,
    })
}

/// Observable fitted for a given initial state.
pub fn fitted_observable(initial: InitialState) -> &'static str {
    match initial {
        InitialState::L0 | InitialState::L1 => PROCESS_Z,
        InitialState::Lx => PROCESS_X,
    }
}

/// Rotating-frame trajectory recording both process observables.
pub fn simulate(p: &SystemParams, s: &RunSettings) -> Result<Trajectory> {
    let h = build_rot_hamiltonian(p)?;
    let l = liouvillian(&h, &collapse_channels(p)?)?;
    let cw = codewords(&ModeLayout::star())?;
    let opts = PropagationOptions {
        store_states: s.store_states,
        ..PropagationOptions::with_observables(process_observables(p, &cw)?)
    };
    Ok(propagate_fixed(&l, &initial_state(s.initial)?, s.dt_us, s.n_steps(), &opts)?)
}

/// Analytic lifetime matching the fitted observable: `T_Z` for the
/// parity traces, `T_X` for the superposition trace.
pub fn predicted_lifetime(rates: &RateSet, initial: InitialState) -> f64 {
    match initial {
        InitialState::L0 | InitialState::L1 => rates.t_z,
        InitialState::Lx => rates.t_x,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub fit: Option<FitResult>,
    pub fit_error: Option<String>,
    pub rates: Option<RateSet>,
    pub predicted_t_l_us: Option<f64>,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    pub max_hermiticity_error: f64,
    pub propagated_dim: usize,
    pub runtime_s: f64,
}

impl PointSummary {
    pub fn t_l(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.t_l)
    }

    pub fn hygiene(&self) -> Hygiene {
        Hygiene {
            max_trace_error: self.max_trace_error,
            min_eigenvalue: self.min_eigenvalue,
            max_hermiticity_error: self.max_hermiticity_error,
            checkpoints: 0,
        }
    }
}

pub fn fit_trajectory(traj: &Trajectory, s: &RunSettings) -> std::result::Result<FitResult, String> {
    let name = fitted_observable(s.initial);
    let series = traj
        .series(name)
        .ok_or_else(|| format!("trajectory has no `{name}` series"))?;
    fit_exponential_with(
        &traj.times,
        series,
        &FitOptions {
            burn_in: Some(s.burn_in_us),
            fix_offset: s.fix_offset,
        },
    )
    .map_err(|e| e.to_string())
}

/// Simulate, fit and predict one parameter point.
pub fn run_point(params: &MhzParams, s: &RunSettings) -> Result<(PointSummary, Trajectory)> {
    let p = params.to_system()?;
    let traj = simulate(&p, s)?;
    let fit = fit_trajectory(&traj, s);
    let rates = predict(&p).ok();
    let summary = PointSummary {
        predicted_t_l_us: rates.as_ref().map(|r| predicted_lifetime(r, s.initial)),
        rates,
        fit_error: fit.as_ref().err().cloned(),
        fit: fit.ok(),
        max_trace_error: traj.hygiene.max_trace_error,
        min_eigenvalue: traj.hygiene.min_eigenvalue,
        max_hermiticity_error: traj.hygiene.max_hermiticity_error,
        propagated_dim: traj.propagated_dim,
        runtime_s: traj.runtime_s,
    };
    Ok((summary, traj))
}

/// Excited-state population of a single bare qutrit decaying at `1/T1`,
/// the physical reference for the logical traces.
pub fn bare_qutrit_decay(t1_us: f64, t_max_us: f64, dt_us: f64) -> Result<Trajectory> {
    let layout = ModeLayout::new(vec![3])?;
    let h = Operator::zeros(&layout);
    let channel = Channel::new("e_to_g", transition(3, G, E)?, 1.0 / t1_us)?;
    let l = liouvillian(&h, &[channel])?;
    let obs = starlab_core::lindblad::Observable::new("e_population", transition(3, E, E)?);
    let opts = PropagationOptions::with_observables(vec![obs]);
    let rho0 = basis_ket(&[E], &layout)?;
    let n_steps = (t_max_us / dt_us).round() as usize;
    Ok(propagate_fixed(&l, &rho0, dt_us, n_steps, &opts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_reference_is_exponential() {
        let tr = bare_qutrit_decay(60.0, 30.0, 0.5).unwrap();
        let pe = tr.series("e_population").unwrap();
        for (t, v) in tr.times.iter().zip(pe) {
            assert!((v - (-t / 60.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn short_run_starts_at_one_and_stays_physical() {
        let p = MhzParams::default().to_system().unwrap();
        for init in [InitialState::L0, InitialState::L1, InitialState::Lx] {
            let s = RunSettings::new(init, 2.0, 0.1, 0.0);
            let tr = simulate(&p, &s).unwrap();
            let v = tr.series(fitted_observable(init)).unwrap();
            let start = if init == InitialState::L1 { -1.0 } else { 1.0 };
            assert!((v[0] - start).abs() < 1e-12);
            assert!(tr.hygiene.within(1e-8, -1e-7));
        }
    }
}
