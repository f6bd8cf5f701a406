//! Adaptive Dormand–Prince 5(4) integration for time-dependent
//! Hamiltonians, used to cross-check the exact fixed-step propagator.

use std::time::Instant;

use ndarray::{Array1, Array2};

use super::{Channel, Hygiene, Observable, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, I, ZERO};
use crate::qspace::{DrivenHamiltonian, Operator, State};

/// Tolerances and limits for [`dormand_prince`].
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: 1e-4,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo(y: &Array1<C64>, h: f64, terms: &[(f64, &Array1<C64>)]) -> Array1<C64> {
    let mut out = y.clone();
    for &(c, k) in terms {
        if c != 0.0 {
            out.scaled_add(C64::new(h * c, 0.0), k);
        }
    }
    out
}

/// Integrate `y' = f(t, y)` from `t_out[0]`, returning `y` at every time in
/// `t_out` (which must be non-decreasing). Steps are clipped to land on each
/// output time exactly.
pub fn dormand_prince<F>(
    mut f: F,
    y0: Array1<C64>,
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Array1<C64>>, OdeStats)>
where
    F: FnMut(f64, &Array1<C64>, &mut Array1<C64>),
{
    let mut stats = OdeStats::default();
    if t_out.is_empty() {
        return Ok((Vec::new(), stats));
    }
    if t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("output times must be non-decreasing".into()));
    }
    let n = y0.len();
    let mut t = t_out[0];
    let mut y = y0;
    let mut h = opts.h_init.min(opts.h_max);
    let mut k1 = Array1::zeros(n);
    f(t, &y, &mut k1);
    stats.evaluations += 1;
    let mut out = Vec::with_capacity(t_out.len());
    out.push(y.clone());

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        Array1::zeros(n),
        Array1::zeros(n),
        Array1::zeros(n),
        Array1::zeros(n),
        Array1::zeros(n),
        Array1::zeros(n),
    );

    for &target in &t_out[1..] {
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::StepUnderflow { t, h });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };

            f(t + C2 * step, &combo(&y, step, &[(A21, &k1)]), &mut k2);
            f(t + C3 * step, &combo(&y, step, &[(A31, &k1), (A32, &k2)]), &mut k3);
            f(
                t + C4 * step,
                &combo(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
                &mut k4,
            );
            f(
                t + C5 * step,
                &combo(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
                &mut k5,
            );
            f(
                t + step,
                &combo(
                    &y,
                    step,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
                &mut k6,
            );
            let y_new = combo(
                &y,
                step,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            f(t + step, &y_new, &mut k7);
            stats.evaluations += 6;

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6
                    + k7[i] * E7)
                    * step;
                let scale = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                err_sq += (e.norm() / scale).powi(2);
            }
            let err = (err_sq / n as f64).sqrt();

            if err.is_finite() && err <= 1.0 {
                t = if last { target } else { t + step };
                y = y_new;
                std::mem::swap(&mut k1, &mut k7);
                stats.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let proposal = (step * fac).min(opts.h_max);
                // A step shortened to hit an output time says little about the next one.
                h = if last { proposal.max(h) } else { proposal };
            } else {
                stats.rejected += 1;
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 1.0) } else { 0.1 };
                h = step * fac;
                if h < opts.h_min {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

/// Coordinate-list sparse matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseOperator {
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOperator {
    pub fn from_operator(op: &Operator) -> Self {
        Self {
            entries: op.nonzeros(),
        }
    }

    fn add_scaled(&mut self, coef: C64, op: &SparseOperator) {
        self.entries
            .extend(op.entries.iter().map(|&(i, j, z)| (i, j, coef * z)));
    }

    /// `out += c * A x`.
    pub fn apply_add(&self, c: C64, x: &Array1<C64>, out: &mut Array1<C64>) {
        for &(i, j, z) in &self.entries {
            out[i] += c * z * x[j];
        }
    }
}

struct SparseDriven {
    constant: SparseOperator,
    terms: Vec<SparseOperator>,
}

impl SparseDriven {
    fn new(h: &DrivenHamiltonian) -> Self {
        Self {
            constant: SparseOperator::from_operator(h.constant()),
            terms: h.term_operators().map(SparseOperator::from_operator).collect(),
        }
    }

    fn at(&self, h: &DrivenHamiltonian, t: f64) -> SparseOperator {
        let mut out = self.constant.clone();
        for (c, term) in h.coefficients(t).into_iter().zip(&self.terms) {
            if c != ZERO {
                out.add_scaled(c, term);
            }
        }
        out
    }
}

/// Evolve a pure state under `H(t)`; returns the kets at each output time.
pub fn evolve_ket_timedep(
    h: &DrivenHamiltonian,
    psi0: &State,
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Array1<C64>>, OdeStats)> {
    let psi = psi0
        .as_ket()
        .ok_or_else(|| Error::InvalidState("expected a pure ket".into()))?;
    if psi0.layout() != h.layout() {
        return Err(Error::DimensionMismatch {
            expected: h.layout().total_dim(),
            found: psi.len(),
        });
    }
    let sparse = SparseDriven::new(h);
    let coeffs_len = h.n_terms();
    let rhs = |t: f64, y: &Array1<C64>, dy: &mut Array1<C64>| {
        dy.fill(ZERO);
        sparse.constant.apply_add(-I, y, dy);
        let c = h.coefficients(t);
        debug_assert_eq!(c.len(), coeffs_len);
        for (ck, term) in c.into_iter().zip(&sparse.terms) {
            if ck != ZERO {
                term.apply_add(-I * ck, y, dy);
            }
        }
    };
    dormand_prince(rhs, psi.clone(), t_out, opts)
}

/// Adaptive master-equation integration under `H(t)` with fixed channels.
/// Observables are recorded at each output time and every recorded state is
/// checked for trace, Hermiticity and positivity.
pub fn propagate_timedep(
    h: &DrivenHamiltonian,
    channels: &[Channel],
    rho0: &State,
    t_out: &[f64],
    tol: f64,
    observables: &[Observable],
) -> Result<Trajectory> {
    let start = Instant::now();
    let layout = h.layout();
    if rho0.layout() != layout {
        return Err(Error::DimensionMismatch {
            expected: layout.total_dim(),
            found: rho0.layout().total_dim(),
        });
    }
    let n = layout.total_dim();
    let sparse = SparseDriven::new(h);
    // Dissipator pieces: jump operators and the anticommutator part.
    let jumps: Vec<(f64, SparseOperator)> = channels
        .iter()
        .filter(|c| c.rate > 0.0)
        .map(|c| (c.rate, SparseOperator::from_operator(&c.op)))
        .collect();
    let mut damping = Array2::<C64>::zeros((n, n));
    for c in channels.iter().filter(|c| c.rate > 0.0) {
        let cm = c.op.matrix();
        damping.scaled_add(C64::new(0.5 * c.rate, 0.0), &linalg::dagger(cm).dot(cm));
    }
    let damping = SparseOperator {
        entries: damping
            .indexed_iter()
            .filter(|(_, z)| **z != ZERO)
            .map(|((i, j), z)| (i, j, *z))
            .collect(),
    };

    let rhs = |t: f64, y: &Array1<C64>, dy: &mut Array1<C64>| {
        dy.fill(ZERO);
        // Effective non-Hermitian generator K = -iH - D, applied as K ρ + ρ K†.
        let ht = sparse.at(h, t);
        let mut k_entries: Vec<(usize, usize, C64)> =
            ht.entries.iter().map(|&(i, j, z)| (i, j, -I * z)).collect();
        k_entries.extend(damping.entries.iter().map(|&(i, j, z)| (i, j, -z)));
        for &(i, k, z) in &k_entries {
            // (K ρ)[i, j] += K[i,k] ρ[k, j]
            for j in 0..n {
                dy[i + j * n] += z * y[k + j * n];
            }
            // (ρ K†)[j, i] += ρ[j, k] conj(K[i, k])
            let zc = z.conj();
            for j in 0..n {
                dy[j + i * n] += y[j + k * n] * zc;
            }
        }
        for (rate, c) in &jumps {
            for &(i, k, a) in &c.entries {
                for &(j, l, b) in &c.entries {
                    dy[i + j * n] += *rate * a * y[k + l * n] * b.conj();
                }
            }
        }
    };

    let v0 = super::vectorize(&rho0.to_density());
    let (states, _) = dormand_prince(rhs, v0, t_out, &OdeOptions::with_tol(tol))?;

    let mut hygiene = Hygiene::default();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(t_out.len()); observables.len()];
    for (&t, v) in t_out.iter().zip(&states) {
        let rho = super::unvectorize(v, n);
        hygiene.check(&rho)?;
        for (series, obs) in values.iter_mut().zip(observables) {
            series.push(obs.evaluate(&rho, t));
        }
    }
    Ok(Trajectory {
        times: t_out.to_vec(),
        names: observables.iter().map(|o| o.name.clone()).collect(),
        values,
        states: Vec::new(),
        hygiene,
        propagated_dim: n * n,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}
