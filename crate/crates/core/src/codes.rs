//! Codewords, Knill–Laflamme checks and the eigenstructure of the
//! zero-photon two-qutrit block of the rotating-frame Hamiltonian.

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ZERO};
use crate::qspace::{embed, lowering, ModeLayout, Operator, State, E, F, G, Q1, Q2};
use crate::starmodel::{build_rot_hamiltonian, SystemParams};

/// Logical basis states with both resonators in vacuum.
#[derive(Clone, Debug, PartialEq)]
pub struct Codewords {
    pub l0: State,
    pub l1: State,
    pub lx: State,
}

pub fn codewords(layout: &ModeLayout) -> Result<Codewords> {
    if layout != &ModeLayout::star() {
        return Err(Error::InvalidInput(format!(
            "codewords need the 3x3x2x2 layout, got {layout}"
        )));
    }
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let l0 = State::superposition(layout, &[(s, &[G, F, 0, 0]), (-s, &[F, G, 0, 0])])?;
    let l1 = State::superposition(layout, &[(s, &[G, G, 0, 0]), (-s, &[F, F, 0, 0])])?;
    let sum = (l0.as_ket().expect("ket") + l1.as_ket().expect("ket")).mapv(|z| z * s);
    let lx = State::ket(layout, sum)?;
    Ok(Codewords { l0, l1, lx })
}

/// Error operators `a_q1`, `a_q2` on the default layout.
pub fn qutrit_lowering_ops(layout: &ModeLayout) -> Result<Vec<Operator>> {
    Ok(vec![
        embed(&lowering(3)?, Q1, layout)?,
        embed(&lowering(3)?, Q2, layout)?,
    ])
}

/// Values of the four condition groups for each error operator `a`:
/// (a) `<L1|L0>`; (b) `<L1|a†a|L0>`; (c) `<L1|a|L0>`, `<L0|a|L1>`,
/// `<L0|a|L0>`, `<L1|a|L1>`; (d) `<L0|a†a|L0>` and `<L1|a†a|L1>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KLReport {
    pub a: C64,
    pub b: Vec<C64>,
    pub c: Vec<[C64; 4]>,
    pub d: Vec<[C64; 2]>,
    pub tolerance: f64,
    pub pass_a: bool,
    pub pass_b: bool,
    pub pass_c: bool,
    pub pass_d: bool,
}

impl KLReport {
    pub fn passed(&self) -> bool {
        self.pass_a && self.pass_b && self.pass_c && self.pass_d
    }
}

pub const KL_TOL: f64 = 1e-12;

pub fn kl_check(cw: &Codewords, error_ops: &[Operator]) -> Result<KLReport> {
    let a = cw.l1.inner(&cw.l0)?;
    let mut b = Vec::new();
    let mut c = Vec::new();
    let mut d = Vec::new();
    for op in error_ops {
        let nop = &op.dagger() * op;
        b.push(cw.l1.matrix_element(&nop, &cw.l0)?);
        c.push([
            cw.l1.matrix_element(op, &cw.l0)?,
            cw.l0.matrix_element(op, &cw.l1)?,
            cw.l0.matrix_element(op, &cw.l0)?,
            cw.l1.matrix_element(op, &cw.l1)?,
        ]);
        d.push([
            cw.l0.matrix_element(&nop, &cw.l0)?,
            cw.l1.matrix_element(&nop, &cw.l1)?,
        ]);
    }
    let tol = KL_TOL;
    Ok(KLReport {
        pass_a: a.norm() <= tol,
        pass_b: b.iter().all(|z| z.norm() <= tol),
        pass_c: c.iter().flatten().all(|z| z.norm() <= tol),
        pass_d: d.iter().all(|[x, y]| (x - y).norm() <= tol),
        a,
        b,
        c,
        d,
        tolerance: tol,
    })
}

/// Qutrit-pair index `3a + b` used for nine-dimensional block vectors.
pub fn pair_index(a: usize, b: usize) -> usize {
    3 * a + b
}

/// The zero-photon two-qutrit block of `h`, indexed by [`pair_index`].
pub fn zero_photon_block(h: &Operator) -> Result<Array2<C64>> {
    let layout = h.layout();
    let sector: Vec<usize> = (0..9)
        .map(|k| layout.index_of(&[k / 3, k % 3, 0, 0]))
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_fn((9, 9), |(i, j)| h.matrix()[[sector[i], sector[j]]]))
}

/// Embed a nine-component pair vector into the full layout with vacuum resonators.
pub fn lift_pair_vector(v: &Array1<C64>) -> Result<State> {
    let layout = ModeLayout::star();
    let mut amps = Array1::zeros(layout.total_dim());
    for k in 0..9 {
        amps[layout.index_of(&[k / 3, k % 3, 0, 0])?] = v[k];
    }
    State::ket(&layout, amps)
}

fn pair_vector(terms: &[((usize, usize), f64)]) -> Array1<C64> {
    let mut v = Array1::zeros(9);
    for &((a, b), c) in terms {
        v[pair_index(a, b)] += C64::new(c, 0.0);
    }
    let norm = v.iter().map(|z: &C64| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv(|z| z / norm)
}

fn rayleigh(h: &Array2<C64>, v: &Array1<C64>) -> (f64, f64) {
    let hv = h.dot(v);
    let e: C64 = v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
    let res = hv
        .iter()
        .zip(v)
        .map(|(x, y)| (x - e.re * y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (e.re, res)
}

/// Non-logical eigenstates of the symmetric block under symmetric detuning.
#[derive(Clone, Debug, PartialEq)]
pub struct StraySet {
    pub t: Array1<C64>,
    pub s_minus: Array1<C64>,
    pub s_plus: Array1<C64>,
    pub e_t: f64,
    pub e_s_minus: f64,
    pub e_s_plus: f64,
    /// Largest eigen-residual `‖Hv − Ev‖` of the three vectors.
    pub max_residual: f64,
    /// `|<S-|fg>|²` with `S-` normalized.
    pub k_s: f64,
    /// `|<S-|fg>|²` using the unnormalized coefficient listing.
    pub k_s_unnormalized: f64,
    /// Sign corrections that were needed to make the closed forms eigenvectors.
    pub s_plus_sign_fix: SignFix,
    pub s_minus_sign_fix: SignFix,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignFix {
    /// Sign of the |ee> coefficient flipped.
    pub ee: bool,
    /// Sign of the |gf>, |fg> coefficients flipped.
    pub gf_fg: bool,
}

impl SignFix {
    pub fn any(&self) -> bool {
        self.ee || self.gf_fg
    }
}

/// Block of the rotating-frame Hamiltonian with sideband rate `w`,
/// detunings `±nu`, and no qutrit-resonator exchange.
pub fn symmetric_block(w: f64, nu: f64, alpha1: f64, alpha2: f64) -> Result<Array2<C64>> {
    let p = SystemParams {
        omega_q1: 0.0,
        omega_q2: 0.0,
        alpha1,
        alpha2,
        omega_r1: 0.0,
        omega_r2: 0.0,
        w,
        nu0: nu,
        nu1: -nu,
        omega1: 0.0,
        omega2: 0.0,
        kappa1: 0.0,
        kappa2: 0.0,
        gamma1: 0.0,
        gamma2: 0.0,
        chi1: 0.0,
        chi2: 0.0,
        dispersive_form: Default::default(),
    };
    zero_photon_block(&build_rot_hamiltonian(&p)?)
}

fn stray_candidate(w: f64, nu: f64, upper: bool, fix: SignFix) -> (Array1<C64>, f64) {
    let r = (w * w + nu * nu).sqrt();
    let pm = if upper { 1.0 } else { -1.0 };
    let side = w * w / (w * w + 2.0 * nu * nu + pm * 2.0 * nu * r);
    let center = -2.0 * (-pm * nu + r) / w;
    let side = if fix.gf_fg { -side } else { side };
    let center = if fix.ee { -center } else { center };
    let raw_norm_sq = 2.0 + 2.0 * side * side + center * center;
    let v = pair_vector(&[
        ((G, G), 1.0),
        ((G, F), side),
        ((E, E), center),
        ((F, G), side),
        ((F, F), 1.0),
    ]);
    (v, raw_norm_sq)
}

/// Normalized stray eigenstates `T`, `S±` for sideband rate `w > 0` and
/// symmetric detuning `nu`, with energies from the rotating-frame block.
///
/// The closed-form `S±` coefficients are checked against the eigenproblem;
/// if a sign must change to satisfy it, the corrected vector is returned
/// and the change is recorded in the set.
pub fn stray_states(w: f64, nu: f64) -> Result<StraySet> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("W = {w} must be > 0")));
    }
    if !nu.is_finite() {
        return Err(Error::InvalidParameter("nu must be finite".into()));
    }
    // The anharmonicities only touch the single-excitation error states.
    let h = symmetric_block(w, nu, -1.0, -1.7)?;
    let tol = 1e-9 * w.max(nu.abs()).max(1.0);

    let t = pair_vector(&[
        ((G, G), 1.0),
        ((G, F), -1.0),
        ((E, E), -2.0 * nu / w),
        ((F, G), -1.0),
        ((F, F), 1.0),
    ]);
    let (e_t, res_t) = rayleigh(&h, &t);

    let r = (w * w + nu * nu).sqrt();
    let resolve = |upper: bool| -> Result<(Array1<C64>, f64, f64, SignFix, f64)> {
        let target = if upper { r } else { -r };
        let fixes = [
            SignFix::default(),
            SignFix { ee: true, gf_fg: false },
            SignFix { ee: false, gf_fg: true },
            SignFix { ee: true, gf_fg: true },
        ];
        for fix in fixes {
            let (v, raw) = stray_candidate(w, nu, upper, fix);
            let (e, res) = rayleigh(&h, &v);
            if res <= tol && (e - target).abs() <= tol {
                return Ok((v, e, res, fix, raw));
            }
        }
        Err(Error::InvalidState(format!(
            "no sign choice makes S{} an eigenvector",
            if upper { "+" } else { "-" }
        )))
    };
    let (s_plus, e_s_plus, res_p, fix_p, _) = resolve(true)?;
    let (s_minus, e_s_minus, res_m, fix_m, raw_m) = resolve(false)?;

    let fg = s_minus[pair_index(F, G)];
    let k_s = fg.norm_sqr();
    // The unnormalized listing has unit weight on |gg>; rescale back.
    let k_s_unnormalized = k_s * raw_m;
    Ok(StraySet {
        t,
        s_minus,
        s_plus,
        e_t,
        e_s_minus,
        e_s_plus,
        max_residual: res_t.max(res_p).max(res_m),
        k_s,
        k_s_unnormalized,
        s_plus_sign_fix: fix_p,
        s_minus_sign_fix: fix_m,
    })
}

/// Eigenstate families of the zero-photon block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateGroup {
    Logical,
    Error,
    Stray,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedState {
    pub label: String,
    pub group: StateGroup,
    pub energy: f64,
    /// Squared overlap with the reference vector.
    pub overlap: f64,
}

pub const CLASSIFY_THRESHOLD: f64 = 0.7;

/// Label the nine zero-photon eigenvectors (without qutrit-resonator
/// exchange) as logical, error or stray by maximum overlap with reference
/// vectors. Results are sorted by energy.
pub fn classify_eigenstates(p: &SystemParams) -> Result<Vec<ClassifiedState>> {
    let nu = p.symmetric_detuning(1e-9).ok_or_else(|| {
        Error::InvalidParameter("classification needs nu0 = -nu1".into())
    })?;
    let h = symmetric_block(p.w, nu, p.alpha1, p.alpha2)?;
    let stray = stray_states(p.w, nu)?;
    let s = FRAC_1_SQRT_2;
    let mut refs: Vec<(&str, StateGroup, Array1<C64>)> = vec![
        ("L0", StateGroup::Logical, pair_vector(&[((G, F), s), ((F, G), -s)])),
        ("L1", StateGroup::Logical, pair_vector(&[((G, G), s), ((F, F), -s)])),
    ];
    for (name, a, b) in [("eg", E, G), ("ge", G, E), ("ef", E, F), ("fe", F, E)] {
        refs.push((name, StateGroup::Error, pair_vector(&[((a, b), 1.0)])));
    }
    refs.push(("T", StateGroup::Stray, stray.t.clone()));
    refs.push(("S-", StateGroup::Stray, stray.s_minus.clone()));
    refs.push(("S+", StateGroup::Stray, stray.s_plus.clone()));

    let (vals, vecs) = linalg::eigh(&h)?;
    let mut used = vec![false; refs.len()];
    let mut out = Vec::with_capacity(9);
    for c in 0..9 {
        let col = vecs.column(c);
        let (best, ov) = refs
            .iter()
            .enumerate()
            .map(|(k, (_, _, r))| {
                let z: C64 = r.iter().zip(col.iter()).map(|(a, b)| a.conj() * b).sum();
                (k, z.norm_sqr())
            })
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if ov < CLASSIFY_THRESHOLD {
            return Err(Error::AmbiguousAssignment(format!(
                "eigenvector {c} (E = {:.6}) has best overlap {ov:.3} with {}",
                vals[c], refs[best].0
            )));
        }
        if used[best] {
            return Err(Error::AmbiguousAssignment(format!(
                "two eigenvectors map to {}",
                refs[best].0
            )));
        }
        used[best] = true;
        out.push(ClassifiedState {
            label: refs[best].0.to_string(),
            group: refs[best].1,
            energy: vals[c],
            overlap: ov,
        });
    }
    Ok(out)
}

/// `‖v‖` helper for nine-component vectors.
pub fn pair_norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `<a|b>` for nine-component vectors.
pub fn pair_inner(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}
