//! Two driven qutrits, each coupled to a lossy two-level resonator.
//!
//! All Hamiltonian coefficients are angular frequencies in rad/µs and all
//! decay rates are in 1/µs. [`MhzParams`] holds the same model in the
//! units a parameter file uses and performs the conversion.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, I};
use crate::lindblad::Channel;
use crate::qspace::{
    basis_ket, embed, lowering, number, projector_sum, transition, DrivenHamiltonian,
    ModeLayout, Operator, E, F, G, Q1, Q2, R1, R2,
};

pub const TWO_PI: f64 = 2.0 * PI;

/// Operator form of the qutrit-resonator dispersive coupling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersiveForm {
    /// `chi_j * n_qj * n_rj`.
    #[default]
    NumberNumber,
    /// `chi_j * |f><f|_qj * n_rj`.
    FLevel,
}

/// Physical parameters in internal units (rad/µs, 1/µs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_q1: f64,
    pub omega_q2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub omega_r1: f64,
    pub omega_r2: f64,
    pub w: f64,
    pub nu0: f64,
    pub nu1: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub chi1: f64,
    pub chi2: f64,
    #[serde(default)]
    pub dispersive_form: DispersiveForm,
}

impl SystemParams {
    /// Rejects negative rates and non-finite values.
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("omega_q1", self.omega_q1),
            ("omega_q2", self.omega_q2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("omega_r1", self.omega_r1),
            ("omega_r2", self.omega_r2),
            ("w", self.w),
            ("nu0", self.nu0),
            ("nu1", self.nu1),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("chi1", self.chi1),
            ("chi2", self.chi2),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        let non_negative = [
            ("w", self.w),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ];
        for (name, v) in non_negative {
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Soft checks of the rate hierarchy `W >> Omega ~ kappa >> gamma`.
    pub fn regime_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (j, om, ka, ga) in [
            (1, self.omega1, self.kappa1, self.gamma1),
            (2, self.omega2, self.kappa2, self.gamma2),
        ] {
            if om > 0.0 && self.w < 3.0 * om {
                out.push(format!("W is not much larger than Omega{j} (W/Omega = {:.3})", self.w / om));
            }
            if om > 0.0 && ka > 0.0 && !(0.1..=10.0).contains(&(om / ka)) {
                out.push(format!("Omega{j} and kappa{j} differ by more than 10x"));
            }
            if ka > 0.0 && ga > 0.0 && ka < 10.0 * ga {
                out.push(format!("kappa{j} is not much larger than gamma{j}"));
            }
        }
        out
    }

    /// Common detuning when `nu0 = -nu1`, else `None`.
    pub fn symmetric_detuning(&self, rel_tol: f64) -> Option<f64> {
        let scale = self.nu0.abs().max(self.nu1.abs()).max(f64::MIN_POSITIVE);
        ((self.nu0 + self.nu1).abs() <= rel_tol * scale).then_some(self.nu0)
    }
}

/// The same parameters in MHz (`x/2π`) and µs, as written in a parameter
/// file. Every frequency, including the resonator linewidths, is multiplied
/// by 2π on conversion; `gamma = 1/T1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhzParams {
    pub omega_q1_mhz: f64,
    pub omega_q2_mhz: f64,
    pub alpha1_mhz: f64,
    pub alpha2_mhz: f64,
    pub omega_r1_mhz: f64,
    pub omega_r2_mhz: f64,
    pub w_mhz: f64,
    pub nu0_mhz: f64,
    pub nu1_mhz: f64,
    pub omega1_mhz: f64,
    pub omega2_mhz: f64,
    pub kappa1_mhz: f64,
    pub kappa2_mhz: f64,
    /// Qutrit T1 shared by both qutrits unless overridden.
    pub t1_us: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1_q1_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1_q2_us: Option<f64>,
    pub chi1_mhz: f64,
    pub chi2_mhz: f64,
    pub dispersive_form: DispersiveForm,
}

impl Default for MhzParams {
    fn default() -> Self {
        Self {
            omega_q1_mhz: 4000.0,
            omega_q2_mhz: 4600.0,
            alpha1_mhz: -160.0,
            alpha2_mhz: -260.0,
            omega_r1_mhz: 6000.0,
            omega_r2_mhz: 6500.0,
            w_mhz: 10.0,
            nu0_mhz: 5.77,
            nu1_mhz: -5.77,
            omega1_mhz: 0.71,
            omega2_mhz: 0.71,
            kappa1_mhz: 0.5,
            kappa2_mhz: 0.5,
            t1_us: 60.0,
            t1_q1_us: None,
            t1_q2_us: None,
            chi1_mhz: 0.0,
            chi2_mhz: 0.0,
            dispersive_form: DispersiveForm::NumberNumber,
        }
    }
}

impl MhzParams {
    pub fn to_system(&self) -> Result<SystemParams> {
        let rate = |t1: f64, name: &str| -> Result<f64> {
            if t1.is_infinite() && t1 > 0.0 {
                Ok(0.0)
            } else if t1 > 0.0 && t1.is_finite() {
                Ok(1.0 / t1)
            } else {
                Err(Error::InvalidParameter(format!("{name} = {t1} must be > 0")))
            }
        };
        let p = SystemParams {
            omega_q1: TWO_PI * self.omega_q1_mhz,
            omega_q2: TWO_PI * self.omega_q2_mhz,
            alpha1: TWO_PI * self.alpha1_mhz,
            alpha2: TWO_PI * self.alpha2_mhz,
            omega_r1: TWO_PI * self.omega_r1_mhz,
            omega_r2: TWO_PI * self.omega_r2_mhz,
            w: TWO_PI * self.w_mhz,
            nu0: TWO_PI * self.nu0_mhz,
            nu1: TWO_PI * self.nu1_mhz,
            omega1: TWO_PI * self.omega1_mhz,
            omega2: TWO_PI * self.omega2_mhz,
            kappa1: TWO_PI * self.kappa1_mhz,
            kappa2: TWO_PI * self.kappa2_mhz,
            gamma1: rate(self.t1_q1_us.unwrap_or(self.t1_us), "t1_q1_us")?,
            gamma2: rate(self.t1_q2_us.unwrap_or(self.t1_us), "t1_q2_us")?,
            chi1: TWO_PI * self.chi1_mhz,
            chi2: TWO_PI * self.chi2_mhz,
            dispersive_form: self.dispersive_form,
        };
        p.validate()?;
        Ok(p)
    }

    /// Set a field by its parameter-file key.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "omega_q1_mhz" => &mut self.omega_q1_mhz,
            "omega_q2_mhz" => &mut self.omega_q2_mhz,
            "alpha1_mhz" => &mut self.alpha1_mhz,
            "alpha2_mhz" => &mut self.alpha2_mhz,
            "omega_r1_mhz" => &mut self.omega_r1_mhz,
            "omega_r2_mhz" => &mut self.omega_r2_mhz,
            "w_mhz" => &mut self.w_mhz,
            "nu0_mhz" => &mut self.nu0_mhz,
            "nu1_mhz" => &mut self.nu1_mhz,
            "omega1_mhz" => &mut self.omega1_mhz,
            "omega2_mhz" => &mut self.omega2_mhz,
            "kappa1_mhz" => &mut self.kappa1_mhz,
            "kappa2_mhz" => &mut self.kappa2_mhz,
            "t1_us" => &mut self.t1_us,
            "chi1_mhz" => &mut self.chi1_mhz,
            "chi2_mhz" => &mut self.chi2_mhz,
            "t1_q1_us" => {
                self.t1_q1_us = Some(value);
                return Ok(());
            }
            "t1_q2_us" => {
                self.t1_q2_us = Some(value);
                return Ok(());
            }
            // Convenience keys that set both qutrits or both resonators.
            "omega_mhz" => {
                self.omega1_mhz = value;
                self.omega2_mhz = value;
                return Ok(());
            }
            "kappa_mhz" => {
                self.kappa1_mhz = value;
                self.kappa2_mhz = value;
                return Ok(());
            }
            "chi_mhz" => {
                self.chi1_mhz = value;
                self.chi2_mhz = value;
                return Ok(());
            }
            "nu_mhz" => {
                self.nu0_mhz = value;
                self.nu1_mhz = -value;
                return Ok(());
            }
            _ => return Err(Error::InvalidParameter(format!("unknown parameter key `{key}`"))),
        };
        *slot = value;
        Ok(())
    }

    /// Read a field by its parameter-file key.
    pub fn get(&self, key: &str) -> Result<f64> {
        Ok(match key {
            "omega_q1_mhz" => self.omega_q1_mhz,
            "omega_q2_mhz" => self.omega_q2_mhz,
            "alpha1_mhz" => self.alpha1_mhz,
            "alpha2_mhz" => self.alpha2_mhz,
            "omega_r1_mhz" => self.omega_r1_mhz,
            "omega_r2_mhz" => self.omega_r2_mhz,
            "w_mhz" => self.w_mhz,
            "nu0_mhz" => self.nu0_mhz,
            "nu1_mhz" => self.nu1_mhz,
            "omega1_mhz" | "omega_mhz" => self.omega1_mhz,
            "omega2_mhz" => self.omega2_mhz,
            "kappa1_mhz" | "kappa_mhz" => self.kappa1_mhz,
            "kappa2_mhz" => self.kappa2_mhz,
            "t1_us" => self.t1_us,
            "t1_q1_us" => self.t1_q1_us.unwrap_or(self.t1_us),
            "t1_q2_us" => self.t1_q2_us.unwrap_or(self.t1_us),
            "chi1_mhz" | "chi_mhz" => self.chi1_mhz,
            "chi2_mhz" => self.chi2_mhz,
            "nu_mhz" => self.nu0_mhz,
            _ => return Err(Error::InvalidParameter(format!("unknown parameter key `{key}`"))),
        })
    }

    pub const KEYS: &'static [&'static str] = &[
        "omega_q1_mhz",
        "omega_q2_mhz",
        "alpha1_mhz",
        "alpha2_mhz",
        "omega_r1_mhz",
        "omega_r2_mhz",
        "w_mhz",
        "nu0_mhz",
        "nu1_mhz",
        "omega1_mhz",
        "omega2_mhz",
        "kappa1_mhz",
        "kappa2_mhz",
        "t1_us",
        "t1_q1_us",
        "t1_q2_us",
        "chi1_mhz",
        "chi2_mhz",
        "omega_mhz",
        "kappa_mhz",
        "chi_mhz",
        "nu_mhz",
    ];
}

/// Instantaneous drive amplitudes (rad/µs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveSnapshot {
    pub a_qq: f64,
    pub a_qr1: f64,
    pub a_qr2: f64,
}

/// Frequencies and amplitudes of the four two-qutrit sideband tones, in the
/// order fg/ee, gf/ee, gg/ee, ff/ee.
pub fn qq_tones(p: &SystemParams) -> [(f64, f64); 4] {
    let diff = p.omega_q2 - p.omega_q1;
    let sum = p.omega_q1 + p.omega_q2;
    [
        (p.w * FRAC_1_SQRT_2, diff - p.alpha1 - p.nu0),
        (p.w * FRAC_1_SQRT_2, diff + p.alpha2 + p.nu0),
        (p.w, sum - p.nu1),
        (p.w / 2.0, sum + p.alpha1 + p.alpha2 + p.nu1),
    ]
}

/// Drive frequencies of the two qutrit-resonator sidebands.
pub fn qr_frequencies(p: &SystemParams) -> [f64; 2] {
    [
        p.omega_q1 + p.omega_r1 + p.alpha1,
        p.omega_q2 + p.omega_r2 + p.alpha2,
    ]
}

pub fn drive_envelopes(p: &SystemParams, t: f64) -> DriveSnapshot {
    let a_qq = qq_tones(p).iter().map(|(amp, f)| amp * (f * t).cos()).sum();
    let [f1, f2] = qr_frequencies(p);
    DriveSnapshot {
        a_qq,
        a_qr1: p.omega1 / SQRT_2 * (f1 * t).cos(),
        a_qr2: p.omega2 / SQRT_2 * (f2 * t).cos(),
    }
}

fn quadrature(dim: usize, mode: usize, layout: &ModeLayout) -> Result<Operator> {
    let a = lowering(dim)?;
    let x = &a + &a.dagger();
    embed(&x, mode, layout)
}

/// Undriven lab-frame energies plus the dispersive terms.
fn bare_lab_hamiltonian(p: &SystemParams, layout: &ModeLayout) -> Result<Operator> {
    let mut h = dispersive_terms(p)?;
    for (mode, omega, alpha) in [(Q1, p.omega_q1, p.alpha1), (Q2, p.omega_q2, p.alpha2)] {
        let n = number(3)?;
        let nn1 = &n * &(&n - &crate::qspace::local_identity(3));
        let local = &(&n * omega) + &(&nn1 * (alpha / 2.0));
        h = &h + &embed(&local, mode, layout)?;
    }
    for (mode, omega) in [(R1, p.omega_r1), (R2, p.omega_r2)] {
        h = &h + &embed(&(&number(2)? * omega), mode, layout)?;
    }
    Ok(h)
}

/// Lab-frame Hamiltonian as a constant part plus three drive terms.
pub fn lab_hamiltonian(p: &SystemParams) -> Result<DrivenHamiltonian> {
    let layout = ModeLayout::star();
    let h0 = bare_lab_hamiltonian(p, &layout)?;
    let xq1 = quadrature(3, Q1, &layout)?;
    let xq2 = quadrature(3, Q2, &layout)?;
    let xr1 = quadrature(2, R1, &layout)?;
    let xr2 = quadrature(2, R2, &layout)?;
    let qq = &xq1 * &xq2;
    let qr1 = &xq1 * &xr1;
    let qr2 = &xq2 * &xr2;
    let (pa, pb, pc) = (p.clone(), p.clone(), p.clone());
    DrivenHamiltonian::new(h0)
        .with_term(qq, move |t| C64::new(drive_envelopes(&pa, t).a_qq, 0.0))?
        .with_term(qr1, move |t| C64::new(drive_envelopes(&pb, t).a_qr1, 0.0))?
        .with_term(qr2, move |t| C64::new(drive_envelopes(&pc, t).a_qr2, 0.0))
}

pub fn build_lab_hamiltonian(p: &SystemParams, t: f64) -> Result<Operator> {
    Ok(lab_hamiltonian(p)?.at(t))
}

/// Diagonal of the generator `K_k` with `U_k(t) = exp(i K_k t)`.
pub fn frame_generator(which: usize, p: &SystemParams) -> Result<Array1<f64>> {
    let layout = ModeLayout::star();
    let n = layout.total_dim();
    let mut diag = Array1::zeros(n);
    for (k, slot) in diag.iter_mut().enumerate() {
        let l = layout.labels_of(k)?;
        let (q1, q2, r1, r2) = (l[0], l[1], l[2], l[3]);
        *slot = match which {
            1 => {
                (p.omega_q1 + p.alpha1 / 2.0) * q1 as f64
                    + (p.omega_q2 + p.alpha2 / 2.0) * q2 as f64
            }
            2 => {
                if (q1, q2) == (E, E) {
                    -(p.alpha1 + p.alpha2) / 2.0
                } else {
                    0.0
                }
            }
            3 => {
                if NU0_PAIRS.contains(&(q1, q2)) {
                    p.nu0
                } else {
                    0.0
                }
            }
            4 => {
                if NU1_PAIRS.contains(&(q1, q2)) {
                    p.nu1
                } else {
                    0.0
                }
            }
            5 => {
                (p.omega_r1 + p.alpha1 / 2.0) * r1 as f64
                    + (p.omega_r2 + p.alpha2 / 2.0) * r2 as f64
            }
            _ => return Err(Error::InvalidFrame(which)),
        };
    }
    Ok(diag)
}

/// Qutrit pairs carrying the `nu0` phase.
pub const NU0_PAIRS: [(usize, usize); 4] = [(G, F), (F, G), (G, E), (E, G)];
/// Qutrit pairs carrying the `nu1` phase.
pub const NU1_PAIRS: [(usize, usize); 4] = [(G, G), (F, F), (E, F), (F, E)];

/// Frame where the codewords are time independent.
pub const FRAME_A: [usize; 3] = [5, 2, 1];
/// Frame where every interaction is time independent.
pub const FRAME_B: [usize; 5] = [5, 4, 3, 2, 1];
/// Maps the time-independent-codeword frame onto the fully rotated one.
pub const FRAME_C: [usize; 2] = [4, 3];

/// Summed generator of a product of frame unitaries.
pub fn composite_generator(factors: &[usize], p: &SystemParams) -> Result<Array1<f64>> {
    let mut acc = Array1::zeros(ModeLayout::star().total_dim());
    for &k in factors {
        acc += &frame_generator(k, p)?;
    }
    Ok(acc)
}

fn phase_operator(theta: &Array1<f64>, t: f64) -> Operator {
    let n = theta.len();
    let mut m = Array2::zeros((n, n));
    for (k, th) in theta.iter().enumerate() {
        m[[k, k]] = (I * th * t).exp();
    }
    Operator::from_matrix(ModeLayout::star(), m).expect("star layout")
}

pub fn frame_unitary(which: usize, p: &SystemParams, t: f64) -> Result<Operator> {
    Ok(phase_operator(&frame_generator(which, p)?, t))
}

pub fn composite_unitary(factors: &[usize], p: &SystemParams, t: f64) -> Result<Operator> {
    Ok(phase_operator(&composite_generator(factors, p)?, t))
}

fn pair_ket_outer(a: (usize, usize), b: (usize, usize), layout: &ModeLayout) -> Result<Operator> {
    // |a><b| on the qutrits, identity on the resonators.
    let mut acc = Operator::zeros(layout);
    for r1 in 0..2 {
        for r2 in 0..2 {
            let ka = basis_ket(&[a.0, a.1, r1, r2], layout)?;
            let kb = basis_ket(&[b.0, b.1, r1, r2], layout)?;
            acc = &acc + &Operator::outer(&ka, &kb)?;
        }
    }
    Ok(acc)
}

/// `(W/2)(|ee><gf| + |ee><fg| + |ee><gg| + |ee><ff| + h.c.)`, identity on the resonators.
pub fn qq_dark_coupling(p: &SystemParams) -> Result<Operator> {
    let layout = ModeLayout::star();
    let mut up = Operator::zeros(&layout);
    for s in [(G, F), (F, G), (G, G), (F, F)] {
        up = &up + &pair_ket_outer((E, E), s, &layout)?;
    }
    Ok(&(&up + &up.dagger()) * (p.w / 2.0))
}

/// Qutrit-resonator exchange `|e,0><f,1| + h.c.` on each pair, amplitude
/// `Omega_j/2`. The spectator qutrit is restricted to `g` or `f`; with the
/// spectator in `e` the term rotates at `(alpha1 + alpha2)/2` and is dropped.
pub fn qr_exchange(p: &SystemParams) -> Result<Operator> {
    let layout = ModeLayout::star();
    let spectator = &transition(3, G, G)? + &transition(3, F, F)?;
    let mut acc = Operator::zeros(&layout);
    for (qmode, other, rmode, om) in [(Q1, Q2, R1, p.omega1), (Q2, Q1, R2, p.omega2)] {
        let q = embed(&transition(3, E, F)?, qmode, &layout)?;
        let s = embed(&spectator, other, &layout)?;
        let r = embed(&transition(2, 0, 1)?, rmode, &layout)?;
        let down = &(&q * &s) * &r;
        acc = &acc + &(&(&down + &down.dagger()) * (om / 2.0));
    }
    Ok(acc)
}

/// Interaction content shared by the static and fully rotated frames:
/// anharmonic offsets, resonator offsets, the exchange terms and dispersive shifts.
fn frame_common(p: &SystemParams) -> Result<Operator> {
    let layout = ModeLayout::star();
    let mut h = &(&projector_sum(&[(E, G), (E, F)], &layout)? * (-p.alpha1 / 2.0))
        + &(&projector_sum(&[(G, E), (F, E)], &layout)? * (-p.alpha2 / 2.0));
    for (mode, alpha) in [(R1, p.alpha1), (R2, p.alpha2)] {
        h = &h + &embed(&(&number(2)? * (-alpha / 2.0)), mode, &layout)?;
    }
    h = &h + &qr_exchange(p)?;
    h = &h + &dispersive_terms(p)?;
    Ok(h)
}

/// Time-independent Hamiltonian in the fully rotated frame.
pub fn build_rot_hamiltonian(p: &SystemParams) -> Result<Operator> {
    let layout = ModeLayout::star();
    let detuning = &(&projector_sum(&NU0_PAIRS, &layout)? * (-p.nu0))
        + &(&projector_sum(&NU1_PAIRS, &layout)? * (-p.nu1));
    Ok(&(&frame_common(p)? + &detuning) + &qq_dark_coupling(p)?)
}

/// Hamiltonian in the frame where the codewords are static, with the
/// two-qutrit sidebands carrying explicit detuning phases.
pub fn static_hamiltonian(p: &SystemParams) -> Result<DrivenHamiltonian> {
    let layout = ModeLayout::star();
    let half_w = p.w / 2.0;
    let k0 = &(&pair_ket_outer((G, F), (E, E), &layout)? + &pair_ket_outer((F, G), (E, E), &layout)?)
        * half_w;
    let k1 = &(&pair_ket_outer((G, G), (E, E), &layout)? + &pair_ket_outer((F, F), (E, E), &layout)?)
        * half_w;
    let (nu0, nu1) = (p.nu0, p.nu1);
    DrivenHamiltonian::new(frame_common(p)?)
        .with_term(k0.dagger(), move |t| (I * nu0 * t).exp())?
        .with_term(k0, move |t| (-I * nu0 * t).exp())?
        .with_term(k1.dagger(), move |t| (I * nu1 * t).exp())?
        .with_term(k1, move |t| (-I * nu1 * t).exp())
}

pub fn build_static_hamiltonian(p: &SystemParams, t: f64) -> Result<Operator> {
    Ok(static_hamiltonian(p)?.at(t))
}

/// Six jump channels: e→g at `gamma_j` and f→e at `2 gamma_j` on each
/// qutrit, and photon loss at `kappa_j` on each resonator.
pub fn collapse_channels(p: &SystemParams) -> Result<Vec<Channel>> {
    let layout = ModeLayout::star();
    let mut out = Vec::with_capacity(6);
    for (j, mode, gamma) in [(1, Q1, p.gamma1), (2, Q2, p.gamma2)] {
        out.push(Channel::new(
            format!("q{j}_e_to_g"),
            embed(&transition(3, G, E)?, mode, &layout)?,
            gamma,
        )?);
        out.push(Channel::new(
            format!("q{j}_f_to_e"),
            embed(&transition(3, E, F)?, mode, &layout)?,
            2.0 * gamma,
        )?);
    }
    for (j, mode, kappa) in [(1, R1, p.kappa1), (2, R2, p.kappa2)] {
        out.push(Channel::new(
            format!("r{j}_photon_loss"),
            embed(&transition(2, 0, 1)?, mode, &layout)?,
            kappa,
        )?);
    }
    Ok(out)
}

/// Qutrit-resonator dispersive shifts in the selected operator form.
pub fn dispersive_terms(p: &SystemParams) -> Result<Operator> {
    let layout = ModeLayout::star();
    let mut h = Operator::zeros(&layout);
    for (qmode, rmode, chi) in [(Q1, R1, p.chi1), (Q2, R2, p.chi2)] {
        if chi == 0.0 {
            continue;
        }
        let q_local = match p.dispersive_form {
            DispersiveForm::NumberNumber => number(3)?,
            DispersiveForm::FLevel => transition(3, F, F)?,
        };
        let q = embed(&q_local, qmode, &layout)?;
        let r = embed(&number(2)?, rmode, &layout)?;
        h = &h + &(&(&q * &r) * chi);
    }
    Ok(h)
}

/// Two-qutrit ZZ combinations that dephase the logical qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZzMetrics {
    pub zz_ff1: f64,
    pub zz_ff2: f64,
}

/// Eigenenergies labelled by maximum overlap with bare zero-photon states,
/// combined into `ZZ_ff1 = E_ff - E_ef - (E_fg - E_eg)` and its mirror
/// `ZZ_ff2 = E_ff - E_fe - (E_gf - E_ge)`. Both vanish for additive spectra.
///
/// Only the zero-photon block of `h` is diagonalized.
pub fn zz_ff_metrics(h: &Operator) -> Result<ZzMetrics> {
    let layout = h.layout();
    if layout != &ModeLayout::star() {
        return Err(Error::DimensionMismatch {
            expected: 36,
            found: h.dim(),
        });
    }
    let sector: Vec<usize> = (0..9)
        .map(|k| layout.index_of(&[k / 3, k % 3, 0, 0]))
        .collect::<Result<_>>()?;
    let block = Array2::from_shape_fn((9, 9), |(i, j)| h.matrix()[[sector[i], sector[j]]]);
    let (vals, vecs) = crate::linalg::eigh(&block)?;

    // Each eigenvector claims the bare state it overlaps most.
    let claims: Vec<usize> = (0..9)
        .map(|c| {
            (0..9)
                .map(|row| (row, vecs[[row, c]].norm_sqr()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
                .0
        })
        .collect();
    let labels = [(F, F), (E, F), (F, G), (E, G), (F, E), (G, F), (G, E)];
    let names = ["ff", "ef", "fg", "eg", "fe", "gf", "ge"];
    let mut energy = [0.0; 7];
    for (slot, &(a, b)) in labels.iter().enumerate() {
        let row = 3 * a + b;
        let owners: Vec<usize> = (0..9).filter(|&c| claims[c] == row).collect();
        match owners.as_slice() {
            [c] => energy[slot] = vals[*c],
            [] => {
                return Err(Error::AmbiguousAssignment(format!(
                    "no eigenvector is dominated by |{}>",
                    names[slot]
                )))
            }
            _ => {
                return Err(Error::AmbiguousAssignment(format!(
                    "eigenvectors {owners:?} all claim |{}>",
                    names[slot]
                )))
            }
        }
    }
    let [ff, ef, fg, eg, fe, gf, ge] = energy;
    Ok(ZzMetrics {
        zz_ff1: ff - ef - (fg - eg),
        zz_ff2: ff - fe - (gf - ge),
    })
}

/// Zero-photon matrix element `<ab,00|H|cd,00>`.
pub fn pair_element(h: &Operator, a: (usize, usize), b: (usize, usize)) -> Result<C64> {
    let l = h.layout();
    let i = l.index_of(&[a.0, a.1, 0, 0])?;
    let j = l.index_of(&[b.0, b.1, 0, 0])?;
    Ok(h.matrix()[[i, j]])
}
