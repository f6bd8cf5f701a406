//! Analytic rate model for logical decay under autonomous correction.
//!
//! All rates are in 1/µs when the inputs are in rad/µs and 1/µs.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::codes::stray_states;
use crate::error::{Error, Result};
use crate::lindblad::{dormand_prince, OdeOptions};
use crate::linalg::C64;
use crate::starmodel::SystemParams;

fn check_non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be finite and >= 0")))
    }
}

/// Refilling rate `Ω²κ / (κ² + Ω²)`.
pub fn gamma_r(omega: f64, kappa: f64) -> Result<f64> {
    check_non_negative("Omega", omega)?;
    check_non_negative("kappa", kappa)?;
    if omega == 0.0 && kappa == 0.0 {
        return Err(Error::InvalidParameter("Omega and kappa are both zero".into()));
    }
    Ok(omega * omega * kappa / (kappa * kappa + omega * omega))
}

/// Leakage rate into `S-`.
pub fn gamma_s(omega: f64, kappa: f64, w: f64, nu: f64, k_s: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter(format!("W = {w} must be > 0")));
    }
    check_non_negative("Omega", omega)?;
    check_non_negative("kappa", kappa)?;
    let gap = -nu + (w * w + nu * nu).sqrt();
    let num = kappa * omega * omega * k_s;
    let den = 4.0 * gap * gap + kappa * kappa + omega * omega * k_s;
    Ok(if num == 0.0 { 0.0 } else { num / den })
}

/// Leakage rate into `T`.
pub fn gamma_t(omega: f64, kappa: f64, w: f64, nu: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::InvalidParameter(format!("W = {w} must be > 0")));
    }
    check_non_negative("Omega", omega)?;
    check_non_negative("kappa", kappa)?;
    let x = 1.0 + nu * nu / (w * w);
    let num = kappa * omega * omega / x;
    let den = 16.0 * nu * nu + 4.0 * kappa * kappa + omega * omega / x;
    Ok(if num == 0.0 { 0.0 } else { num / den })
}

/// `sqrt(γ² + 6γΓ_R + Γ_R²)`.
pub fn delta(gamma: f64, gr: f64) -> f64 {
    (gamma * gamma + 6.0 * gamma * gr + gr * gr).sqrt()
}

/// Exact logical population of the two-level refilling model.
pub fn pl_closed_form(t: f64, gamma: f64, gr: f64) -> f64 {
    let d = delta(gamma, gr);
    if d == 0.0 {
        return 1.0;
    }
    let slow = (-gamma + gr + d) / (2.0 * d) * (t * (d - 3.0 * gamma - gr) / 2.0).exp();
    let fast = (gamma - gr + d) / (2.0 * d) * (t * (-d - 3.0 * gamma - gr) / 2.0).exp();
    slow + fast
}

/// Leading slow term for `Γ_R >> γ`.
pub fn pl_approx(t: f64, gamma: f64, gr: f64) -> f64 {
    (1.0 - 2.0 * gamma / gr) * (-2.0 * gamma * gamma * t / (gr + 3.0 * gamma)).exp()
}

/// Populations `(P_L, P_E)` of the refilling model with leakage, from
/// `P_L(0) = 1`, by adaptive numerical integration.
pub fn rate_ode_oracle(
    gamma: f64,
    gr: f64,
    gs: f64,
    gt: f64,
    t_grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    for (name, v) in [("gamma", gamma), ("Gamma_R", gr), ("Gamma_S", gs), ("Gamma_T", gt)] {
        check_non_negative(name, v)?;
    }
    if t_grid.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut times = vec![0.0];
    times.extend_from_slice(t_grid);
    let loss = gamma + gr + gs + gt;
    let opts = OdeOptions {
        rtol: 1e-13,
        atol: 1e-16,
        h_init: 1e-3 / (gamma + gr + gs + gt + 1.0),
        ..OdeOptions::default()
    };
    let y0 = Array1::from(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let (ys, _) = dormand_prince(
        |_, y, dy| {
            dy[0] = y[0] * (-2.0 * gamma) + y[1] * (2.0 * gr);
            dy[1] = y[0] * gamma - y[1] * loss;
        },
        y0,
        &times,
        &opts,
    )?;
    let pl = ys[1..].iter().map(|y| y[0].re).collect();
    let pe = ys[1..].iter().map(|y| y[1].re).collect();
    Ok((pl, pe))
}

/// Which logical state's correction cycle the 2x2 rate matrix describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayPath {
    /// Error states decay further at `γ`.
    L0,
    /// Error states decay further at `3γ`.
    L1,
}

/// Slow decay rate: minus the eigenvalue of smaller magnitude of
/// `[[-2γ, 2Γ_R], [γ, -(γ_e + Γ_R + Γ_S + Γ_T)]]`, with `γ_e = γ` or `3γ`.
pub fn slow_eigenvalue(gamma: f64, gr: f64, gs: f64, gt: f64, path: DecayPath) -> f64 {
    let gamma_e = match path {
        DecayPath::L0 => gamma,
        DecayPath::L1 => 3.0 * gamma,
    };
    let a = -2.0 * gamma;
    let b = 2.0 * gr;
    let c = gamma;
    let d = -(gamma_e + gr + gs + gt);
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    // Larger (less negative) root, computed without cancellation.
    let fast = (tr - disc) / 2.0;
    if fast == 0.0 {
        return 0.0;
    }
    -(det / fast)
}

/// Full set of analytic rates and lifetimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub gamma: f64,
    pub gamma_r: f64,
    pub gamma_s: f64,
    pub gamma_t: f64,
    pub k_s: f64,
    pub gamma_l0: f64,
    pub gamma_l1: f64,
    pub gamma_z: f64,
    pub t_z: f64,
    pub t_x: f64,
    pub delta: f64,
    /// Same quantities from the exact 2x2 eigenvalues.
    pub gamma_l0_exact: f64,
    pub gamma_l1_exact: f64,
    pub t_z_exact: f64,
}

/// Logical rates for symmetric detuning. Per-qutrit parameters that
/// differ are averaged.
pub fn logical_rates(p: &SystemParams, k_s: f64) -> Result<RateSet> {
    let nu = p
        .symmetric_detuning(1e-9)
        .ok_or_else(|| Error::InvalidParameter("rate model needs nu0 = -nu1".into()))?;
    let gamma = 0.5 * (p.gamma1 + p.gamma2);
    let omega = 0.5 * (p.omega1 + p.omega2);
    let kappa = 0.5 * (p.kappa1 + p.kappa2);
    let gr = gamma_r(omega, kappa)?;
    let gs = gamma_s(omega, kappa, p.w, nu, k_s)?;
    let gt = gamma_t(omega, kappa, p.w, nu)?;
    let gamma_l0 = 2.0 * gamma * (gamma + gs + gt) / (3.0 * gamma + gr + gs + gt);
    let gamma_l1 = 2.0 * gamma * (3.0 * gamma + gs + gt) / (5.0 * gamma + gr + gs + gt);
    let gamma_z = gamma_l0 + gamma_l1;
    let t_z = 1.0 / gamma_z;
    let gamma_l0_exact = slow_eigenvalue(gamma, gr, gs, gt, DecayPath::L0);
    let gamma_l1_exact = slow_eigenvalue(gamma, gr, gs, gt, DecayPath::L1);
    Ok(RateSet {
        gamma,
        gamma_r: gr,
        gamma_s: gs,
        gamma_t: gt,
        k_s,
        gamma_l0,
        gamma_l1,
        gamma_z,
        t_z,
        t_x: 4.0 * t_z / 3.0,
        delta: delta(gamma, gr),
        gamma_l0_exact,
        gamma_l1_exact,
        t_z_exact: 1.0 / (gamma_l0_exact + gamma_l1_exact),
    })
}

/// [`logical_rates`] with `k_s` taken from the stray eigenstates.
pub fn predict(p: &SystemParams) -> Result<RateSet> {
    let nu = p
        .symmetric_detuning(1e-9)
        .ok_or_else(|| Error::InvalidParameter("rate model needs nu0 = -nu1".into()))?;
    let k_s = stray_states(p.w, nu)?.k_s;
    logical_rates(p, k_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_r_cases() {
        assert!((gamma_r(2.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(gamma_r(0.0, 1.0).unwrap(), 0.0);
        assert!(gamma_r(0.0, 0.0).is_err());
        assert!(gamma_r(-1.0, 1.0).is_err());
        // Fixed Omega: the maximum over kappa sits at kappa = Omega.
        let om = 1.7;
        let at_opt = gamma_r(om, om).unwrap();
        for k in 1..200 {
            let kappa = 0.02 * k as f64;
            assert!(gamma_r(om, kappa).unwrap() <= at_opt + 1e-15);
        }
    }

    #[test]
    fn leakage_substitutions() {
        let (om, ka, w) = (0.8, 0.5, 6.0);
        let gt = gamma_t(om, ka, w, 0.0).unwrap();
        assert!((gt - ka * om * om / (4.0 * ka * ka + om * om)).abs() < 1e-15);
        let gs = gamma_s(om, ka, w, 0.0, 0.125).unwrap();
        let want = ka * om * om / 8.0 / (4.0 * w * w + ka * ka + om * om / 8.0);
        assert!((gs - want).abs() < 1e-15);
        assert!(gamma_s(om, ka, 0.0, 0.0, 0.1).is_err());
        assert!(gamma_t(om, ka, -1.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_edges() {
        assert!((pl_closed_form(0.0, 0.05, 1.2) - 1.0).abs() < 1e-15);
        for &t in &[0.0, 3.0, 100.0] {
            assert!((pl_closed_form(t, 0.0, 1.3) - 1.0).abs() < 1e-15);
        }
        assert_eq!(delta(0.0, 1.3), 1.3);
    }

    #[test]
    fn oracle_without_refill_is_plain_decay() {
        let g = 0.07;
        let grid: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let (pl, _) = rate_ode_oracle(g, 0.0, 0.0, 0.0, &grid).unwrap();
        for (t, p) in grid.iter().zip(pl) {
            assert!((p - (-2.0 * g * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_oracle() {
        for &(g, gr) in &[(0.05, 1.5), (0.3, 0.2), (0.01, 3.0)] {
            let grid: Vec<f64> = (0..=200).map(|k| k as f64 * 10.0 / g / 200.0).collect();
            let (pl, _) = rate_ode_oracle(g, gr, 0.0, 0.0, &grid).unwrap();
            for (t, p) in grid.iter().zip(pl) {
                assert!((p - pl_closed_form(*t, g, gr)).abs() < 1e-10, "t = {t}");
            }
        }
    }

    #[test]
    fn long_time_slope_matches_slow_rate() {
        let (g, gr, gs, gt) = (0.01, 5.0, 0.02, 0.01);
        let (pl, _) = rate_ode_oracle(g, gr, gs, gt, &[400.0, 500.0]).unwrap();
        let slope = -(pl[1].ln() - pl[0].ln()) / 100.0;
        let formula = 2.0 * g * (g + gs + gt) / (3.0 * g + gr + gs + gt);
        assert!((slope - formula).abs() / formula < 1e-2);
        let exact = slow_eigenvalue(g, gr, gs, gt, DecayPath::L0);
        assert!((slope - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn limits_of_logical_rates() {
        let g: f64 = 1e-4;
        let gr: f64 = 10.0;
        let l0 = 2.0 * g * g / (3.0 * g + gr);
        let l1 = 2.0 * g * (3.0 * g) / (5.0 * g + gr);
        assert!((l0 / (2.0 * g * g / gr) - 1.0).abs() < 1e-4);
        assert!((l1 / l0 - 3.0).abs() < 1e-3);
    }

    #[test]
    fn figure_parameters_regime() {
        for t1 in [20.0, 40.0, 60.0] {
            let m = crate::starmodel::MhzParams {
                t1_us: t1,
                ..Default::default()
            };
            let r = predict(&m.to_system().unwrap()).unwrap();
            assert!(r.gamma_s < r.gamma && r.gamma_t < r.gamma);
            assert!((r.t_x / r.t_z - 4.0 / 3.0).abs() < 1e-15);
            assert!((r.delta.powi(2) - (r.gamma.powi(2) + 6.0 * r.gamma * r.gamma_r + r.gamma_r.powi(2))).abs()
                <= 1e-12 * r.delta.powi(2));
        }
    }

    #[test]
    fn asymmetric_detuning_is_rejected() {
        let mut p = crate::starmodel::MhzParams::default().to_system().unwrap();
        p.nu1 = 0.0;
        assert!(predict(&p).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gamma_r_scaled_symmetry_and_bound(om in 0.001f64..10.0, ka in 0.001f64..10.0) {
                let a = gamma_r(om, ka).unwrap();
                let b = gamma_r(ka, om).unwrap();
                prop_assert!((a / om - b / ka).abs() <= 1e-12 * (a / om));
                prop_assert!(a <= om.min(ka) * (1.0 + 1e-15));
            }

            #[test]
            fn logical_rates_decrease_with_refill(g in 1e-3f64..0.1, gr in 0.1f64..5.0, bump in 0.01f64..2.0) {
                let l0 = |gr: f64| 2.0 * g * (g + 0.01) / (3.0 * g + gr + 0.01);
                let l1 = |gr: f64| 2.0 * g * (3.0 * g + 0.01) / (5.0 * g + gr + 0.01);
                prop_assert!(l0(gr + bump) < l0(gr));
                prop_assert!(l1(gr + bump) < l1(gr));
            }

            #[test]
            fn slow_eigenvalue_first_order(g in 1e-4f64..1e-3, ratio in 1e3f64..1e5) {
                let gr = g * ratio;
                let exact = slow_eigenvalue(g, gr, 0.0, 0.0, DecayPath::L0);
                let formula = 2.0 * g * g / (3.0 * g + gr);
                prop_assert!((exact - formula).abs() / formula < 1e-2);
            }

            #[test]
            fn closed_form_pointwise(g in 0.005f64..0.5, gr in 0.0f64..5.0, frac in 0.0f64..1.0) {
                let t = frac * 10.0 / g;
                let (pl, _) = rate_ode_oracle(g, gr, 0.0, 0.0, &[t]).unwrap();
                prop_assert!((pl[0] - pl_closed_form(t, g, gr)).abs() < 1e-10);
            }
        }
    }
}
