//! Operator algebra over a composite Hilbert space of truncated modes.
//!
//! Basis states are labelled by one level index per mode and ordered in
//! mixed radix with the first mode as the most significant digit. For the
//! default layout the ordering is `(Q1, Q2, R1, R2)` with dimensions
//! `(3, 3, 2, 2)`, so `|g,g,0,0>` is index 0 and `|f,f,1,1>` is index 35.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64, ONE, ZERO};

/// Qutrit ground level.
pub const G: usize = 0;
/// Qutrit first excited level.
pub const E: usize = 1;
/// Qutrit second excited level.
pub const F: usize = 2;

/// Mode indices of the default layout.
pub const Q1: usize = 0;
pub const Q2: usize = 1;
pub const R1: usize = 2;
pub const R2: usize = 3;

/// Tolerances for state validation.
pub const KET_NORM_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = -1e-9;
pub const HERMITIAN_TOL: f64 = 1e-12;

const QUTRIT_NAMES: [char; 3] = ['g', 'e', 'f'];

/// Ordered mode dimensions of a composite space.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeLayout {
    dims: Vec<usize>,
}

impl ModeLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one mode".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::InvalidDimension(d));
        }
        Ok(Self { dims })
    }

    /// Two qutrits followed by two two-level resonators.
    pub fn star() -> Self {
        Self {
            dims: vec![3, 3, 2, 2],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Composite index of a label tuple.
    pub fn index_of(&self, labels: &[usize]) -> Result<usize> {
        if labels.len() != self.dims.len() {
            return Err(Error::LabelCount {
                expected: self.dims.len(),
                found: labels.len(),
            });
        }
        let mut index = 0;
        for (mode, (&label, &dim)) in labels.iter().zip(&self.dims).enumerate() {
            if label >= dim {
                return Err(Error::LabelOutOfRange { mode, label, dim });
            }
            index = index * dim + label;
        }
        Ok(index)
    }

    /// Label tuple of a composite index.
    pub fn labels_of(&self, index: usize) -> Result<Vec<usize>> {
        let total = self.total_dim();
        if index >= total {
            return Err(Error::IndexOutOfRange { index, total });
        }
        let mut rest = index;
        let mut labels = vec![0; self.dims.len()];
        for (slot, &dim) in labels.iter_mut().zip(&self.dims).rev() {
            *slot = rest % dim;
            rest /= dim;
        }
        Ok(labels)
    }

    /// Human-readable basis label, using g/e/f for three-level modes.
    pub fn label_string(&self, index: usize) -> Result<String> {
        let labels = self.labels_of(index)?;
        let parts: Vec<String> = labels
            .iter()
            .zip(&self.dims)
            .map(|(&l, &d)| {
                if d == 3 {
                    QUTRIT_NAMES[l].to_string()
                } else {
                    l.to_string()
                }
            })
            .collect();
        Ok(format!("|{}>", parts.join(",")))
    }

    fn single_mode(dim: usize) -> Self {
        Self { dims: vec![dim] }
    }
}

impl fmt::Display for ModeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", dims.join("x"))
    }
}

/// Dense complex operator on a layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    layout: ModeLayout,
    matrix: Array2<C64>,
}

impl Operator {
    pub fn from_matrix(layout: ModeLayout, matrix: Array2<C64>) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { layout, matrix })
    }

    pub fn zeros(layout: &ModeLayout) -> Self {
        let n = layout.total_dim();
        Self {
            layout: layout.clone(),
            matrix: Array2::zeros((n, n)),
        }
    }

    pub fn identity(layout: &ModeLayout) -> Self {
        let n = layout.total_dim();
        Self {
            layout: layout.clone(),
            matrix: Array2::from_diag_elem(n, ONE),
        }
    }

    /// Diagonal operator from real diagonal entries.
    pub fn diagonal(layout: &ModeLayout, diag: &[f64]) -> Result<Self> {
        let n = layout.total_dim();
        if diag.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: diag.len(),
            });
        }
        let mut m = Array2::zeros((n, n));
        for (k, &d) in diag.iter().enumerate() {
            m[[k, k]] = C64::new(d, 0.0);
        }
        Ok(Self {
            layout: layout.clone(),
            matrix: m,
        })
    }

    /// `|a><b|` for two kets on the same layout.
    pub fn outer(a: &State, b: &State) -> Result<Self> {
        let (ka, kb) = match (a.as_ket(), b.as_ket()) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::InvalidState("outer product needs pure kets".into())),
        };
        check_layout(a.layout(), b.layout())?;
        let n = ka.len();
        let m = Array2::from_shape_fn((n, n), |(i, j)| ka[i] * kb[j].conj());
        Ok(Self {
            layout: a.layout().clone(),
            matrix: m,
        })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: linalg::dagger(&self.matrix),
        }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    pub fn scale(&self, z: C64) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.mapv(|x| x * z),
        }
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// Largest entrywise modulus of `self - self†`.
    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        linalg::max_abs_diff(self.matrix.view(), other.matrix.view())
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, ket: &Array1<C64>) -> Array1<C64> {
        self.matrix.dot(ket)
    }

    /// Eigenvalues (ascending) and eigenvectors of a Hermitian operator.
    pub fn eigh(&self) -> Result<(Array1<f64>, Array2<C64>)> {
        linalg::eigh(&self.matrix)
    }

    /// Basis indices `(row, col)` of nonzero entries.
    pub fn nonzeros(&self) -> Vec<(usize, usize, C64)> {
        self.matrix
            .indexed_iter()
            .filter(|(_, &z)| z != ZERO)
            .map(|((i, j), &z)| (i, j, z))
            .collect()
    }
}

fn check_layout(a: &ModeLayout, b: &ModeLayout) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a.total_dim(),
            found: b.total_dim(),
        });
    }
    Ok(())
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "operator layouts differ");
        Operator {
            layout: self.layout.clone(),
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "operator layouts differ");
        Operator {
            layout: self.layout.clone(),
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "operator layouts differ");
        Operator {
            layout: self.layout.clone(),
            matrix: self.matrix.dot(&rhs.matrix),
        }
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        &self + &rhs
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        &self - &rhs
    }
}

/// Pure ket or density matrix on a layout.
#[derive(Clone, Debug, PartialEq)]
pub enum StateKind {
    Ket(Array1<C64>),
    Density(Array2<C64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    layout: ModeLayout,
    kind: StateKind,
}

impl State {
    /// Pure state; the amplitudes must have unit norm within [`KET_NORM_TOL`].
    pub fn ket(layout: &ModeLayout, amps: Array1<C64>) -> Result<Self> {
        let n = layout.total_dim();
        if amps.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: amps.len(),
            });
        }
        let state = Self {
            layout: layout.clone(),
            kind: StateKind::Ket(amps),
        };
        state.validate()?;
        Ok(state)
    }

    /// Density matrix; validated for Hermiticity, unit trace and positivity.
    pub fn density(layout: &ModeLayout, rho: Array2<C64>) -> Result<Self> {
        let n = layout.total_dim();
        if rho.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rho.nrows().max(rho.ncols()),
            });
        }
        let state = Self {
            layout: layout.clone(),
            kind: StateKind::Density(rho),
        };
        state.validate()?;
        Ok(state)
    }

    /// Normalized superposition `sum_k c_k |labels_k>`.
    pub fn superposition(layout: &ModeLayout, terms: &[(C64, &[usize])]) -> Result<Self> {
        let mut amps = Array1::<C64>::zeros(layout.total_dim());
        for (c, labels) in terms {
            amps[layout.index_of(labels)?] += *c;
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("superposition has zero norm".into()));
        }
        amps.mapv_inplace(|z| z / norm);
        Self::ket(layout, amps)
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn kind(&self) -> &StateKind {
        &self.kind
    }

    pub fn as_ket(&self) -> Option<&Array1<C64>> {
        match &self.kind {
            StateKind::Ket(k) => Some(k),
            StateKind::Density(_) => None,
        }
    }

    pub fn to_density(&self) -> Array2<C64> {
        match &self.kind {
            StateKind::Ket(k) => {
                let n = k.len();
                Array2::from_shape_fn((n, n), |(i, j)| k[i] * k[j].conj())
            }
            StateKind::Density(rho) => rho.clone(),
        }
    }

    /// `<self|other>` for kets.
    pub fn inner(&self, other: &State) -> Result<C64> {
        check_layout(&self.layout, &other.layout)?;
        match (self.as_ket(), other.as_ket()) {
            (Some(a), Some(b)) => Ok(a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()),
            _ => Err(Error::InvalidState("inner product needs pure kets".into())),
        }
    }

    /// `<self|op|other>` for kets.
    pub fn matrix_element(&self, op: &Operator, other: &State) -> Result<C64> {
        check_layout(&self.layout, op.layout())?;
        check_layout(&self.layout, &other.layout)?;
        match (self.as_ket(), other.as_ket()) {
            (Some(a), Some(b)) => {
                let ob = op.apply(b);
                Ok(a.iter().zip(&ob).map(|(x, y)| x.conj() * y).sum())
            }
            _ => Err(Error::InvalidState("matrix element needs pure kets".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            StateKind::Ket(k) => {
                let norm = k.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > KET_NORM_TOL {
                    return Err(Error::InvalidState(format!("ket norm {norm} is not 1")));
                }
            }
            StateKind::Density(rho) => {
                let herm = linalg::hermiticity_error(rho);
                if herm > HERMITIAN_TOL.max(1e-10) {
                    return Err(Error::InvalidState(format!(
                        "density matrix is not Hermitian (error {herm:e})"
                    )));
                }
                let tr = rho.diag().sum();
                if (tr - ONE).norm() > TRACE_TOL {
                    return Err(Error::InvalidState(format!("trace {tr} is not 1")));
                }
                let min = linalg::min_eigenvalue(rho)?;
                if min < PSD_TOL {
                    return Err(Error::InvalidState(format!(
                        "density matrix has eigenvalue {min:e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Time-dependent operator `H(t) = H_0 + sum_k f_k(t) O_k`.
#[derive(Clone)]
pub struct DrivenHamiltonian {
    constant: Operator,
    terms: Vec<(Operator, Arc<dyn Fn(f64) -> C64 + Send + Sync>)>,
}

impl fmt::Debug for DrivenHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DrivenHamiltonian")
            .field("layout", self.constant.layout())
            .field("terms", &self.terms.len())
            .finish()
    }
}

impl DrivenHamiltonian {
    pub fn new(constant: Operator) -> Self {
        Self {
            constant,
            terms: Vec::new(),
        }
    }

    pub fn with_term<F>(mut self, op: Operator, coeff: F) -> Result<Self>
    where
        F: Fn(f64) -> C64 + Send + Sync + 'static,
    {
        check_layout(self.constant.layout(), op.layout())?;
        self.terms.push((op, Arc::new(coeff)));
        Ok(self)
    }

    pub fn layout(&self) -> &ModeLayout {
        self.constant.layout()
    }

    pub fn constant(&self) -> &Operator {
        &self.constant
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Operators and coefficient values at time `t`.
    pub fn coefficients(&self, t: f64) -> Vec<C64> {
        self.terms.iter().map(|(_, f)| f(t)).collect()
    }

    pub fn term_operators(&self) -> impl Iterator<Item = &Operator> {
        self.terms.iter().map(|(op, _)| op)
    }

    pub fn at(&self, t: f64) -> Operator {
        let mut m = self.constant.matrix.clone();
        for (op, f) in &self.terms {
            let c = f(t);
            if c != ZERO {
                m.scaled_add(c, &op.matrix);
            }
        }
        Operator {
            layout: self.constant.layout.clone(),
            matrix: m,
        }
    }
}

/// Unit ket at the composite index of `labels`.
pub fn basis_ket(labels: &[usize], layout: &ModeLayout) -> Result<State> {
    let index = layout.index_of(labels)?;
    let mut amps = Array1::zeros(layout.total_dim());
    amps[index] = ONE;
    State::ket(layout, amps)
}

/// Truncated bosonic lowering operator: `a|n> = sqrt(n)|n-1>`.
pub fn lowering(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let mut m = Array2::zeros((dim, dim));
    for n in 1..dim {
        m[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(Operator {
        layout: ModeLayout::single_mode(dim),
        matrix: m,
    })
}

/// Number operator `diag(0, 1, ..., dim-1)`.
pub fn number(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let diag: Vec<f64> = (0..dim).map(|n| n as f64).collect();
    Operator::diagonal(&ModeLayout::single_mode(dim), &diag)
}

/// Single-mode identity.
pub fn local_identity(dim: usize) -> Operator {
    Operator::identity(&ModeLayout::single_mode(dim))
}

/// Single-mode transition `|to><from|`.
pub fn transition(dim: usize, to: usize, from: usize) -> Result<Operator> {
    for &l in &[to, from] {
        if l >= dim {
            return Err(Error::LabelOutOfRange {
                mode: 0,
                label: l,
                dim,
            });
        }
    }
    let mut m = Array2::zeros((dim, dim));
    m[[to, from]] = ONE;
    Ok(Operator {
        layout: ModeLayout::single_mode(dim),
        matrix: m,
    })
}

/// Lift a single-mode operator onto `mode` of `layout`, acting as the
/// identity on every other mode.
pub fn embed(local: &Operator, mode: usize, layout: &ModeLayout) -> Result<Operator> {
    let dims = layout.dims();
    if mode >= dims.len() {
        return Err(Error::ModeOutOfRange {
            mode,
            modes: dims.len(),
        });
    }
    if local.dim() != dims[mode] {
        return Err(Error::DimensionMismatch {
            expected: dims[mode],
            found: local.dim(),
        });
    }
    let inner: usize = dims[mode + 1..].iter().product();
    let outer: usize = dims[..mode].iter().product();
    let d = dims[mode];
    let n = layout.total_dim();
    let mut m = Array2::zeros((n, n));
    for ((p, q), &z) in local.matrix.indexed_iter() {
        if z == ZERO {
            continue;
        }
        for o in 0..outer {
            for i in 0..inner {
                m[[(o * d + p) * inner + i, (o * d + q) * inner + i]] = z;
            }
        }
    }
    Ok(Operator {
        layout: layout.clone(),
        matrix: m,
    })
}

/// `|ab><ab| ⊗ I ⊗ I` over the two qutrit modes of the default layout
/// (generally: identity on every mode after the second).
pub fn projector(q1_level: usize, q2_level: usize, layout: &ModeLayout) -> Result<Operator> {
    let dims = layout.dims();
    if dims.len() < 2 {
        return Err(Error::ModeOutOfRange {
            mode: 1,
            modes: dims.len(),
        });
    }
    for (mode, &label) in [q1_level, q2_level].iter().enumerate() {
        if label >= dims[mode] {
            return Err(Error::LabelOutOfRange {
                mode,
                label,
                dim: dims[mode],
            });
        }
    }
    let n = layout.total_dim();
    let mut m = Array2::zeros((n, n));
    for k in 0..n {
        let labels = layout.labels_of(k)?;
        if labels[0] == q1_level && labels[1] == q2_level {
            m[[k, k]] = ONE;
        }
    }
    Ok(Operator {
        layout: layout.clone(),
        matrix: m,
    })
}

/// Sum of projectors over a list of qutrit-pair levels.
pub fn projector_sum(pairs: &[(usize, usize)], layout: &ModeLayout) -> Result<Operator> {
    let mut acc = Operator::zeros(layout);
    for &(a, b) in pairs {
        acc = &acc + &projector(a, b, layout)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> ModeLayout {
        ModeLayout::star()
    }

    #[test]
    fn total_dim_is_product() {
        assert_eq!(star().total_dim(), 36);
        assert_eq!(ModeLayout::new(vec![2, 5, 3]).unwrap().total_dim(), 30);
    }

    #[test]
    fn basis_ket_canonical_ordering() {
        let l = star();
        let k = basis_ket(&[G, G, 0, 0], &l).unwrap();
        assert_eq!(k.as_ket().unwrap()[0], ONE);
        let k = basis_ket(&[F, F, 1, 1], &l).unwrap();
        assert_eq!(k.as_ket().unwrap()[35], ONE);
    }

    #[test]
    fn basis_ket_matches_enumeration() {
        // Independent enumeration: nested loops in declared mode order.
        let l = star();
        let mut enumerated = Vec::new();
        for q1 in 0..3 {
            for q2 in 0..3 {
                for r1 in 0..2 {
                    for r2 in 0..2 {
                        enumerated.push([q1, q2, r1, r2]);
                    }
                }
            }
        }
        let target = [E, G, 0, 1];
        let expected = enumerated.iter().position(|t| *t == target).unwrap();
        assert_eq!(expected, 13);
        let k = basis_ket(&target, &l).unwrap();
        let amps = k.as_ket().unwrap();
        assert_eq!(amps[expected], ONE);
        assert_eq!(amps.iter().filter(|z| **z != ZERO).count(), 1);
        for (idx, labels) in enumerated.iter().enumerate() {
            assert_eq!(l.index_of(labels).unwrap(), idx);
            assert_eq!(l.labels_of(idx).unwrap(), labels.to_vec());
        }
    }

    #[test]
    fn basis_ket_rejects_out_of_range() {
        let err = basis_ket(&[3, 0, 0, 0], &star()).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { mode: 0, label: 3, dim: 3 }));
        assert!(matches!(
            basis_ket(&[0, 0, 2, 0], &star()),
            Err(Error::LabelOutOfRange { mode: 2, .. })
        ));
        assert!(matches!(
            basis_ket(&[0, 0, 0], &star()),
            Err(Error::LabelCount { .. })
        ));
    }

    #[test]
    fn lowering_ladder_action() {
        let a = lowering(3).unwrap();
        let e = Array1::from(vec![ZERO, ONE, ZERO]);
        let f = Array1::from(vec![ZERO, ZERO, ONE]);
        assert_eq!(a.apply(&e), Array1::from(vec![ONE, ZERO, ZERO]));
        let af = a.apply(&f);
        assert!((af[1] - C64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);
        let a2 = lowering(2).unwrap();
        let ground = Array1::from(vec![ONE, ZERO]);
        assert!(a2.apply(&ground).iter().all(|z| *z == ZERO));
        assert!(matches!(lowering(1), Err(Error::InvalidDimension(1))));
    }

    #[test]
    fn lowering_gives_number_operator() {
        for d in 2..6 {
            let a = lowering(d).unwrap();
            let n = &a.dagger() * &a;
            assert!(n.max_abs_diff(&number(d).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn embedded_lowerings_commute() {
        let l = star();
        let a1 = embed(&lowering(3).unwrap(), Q1, &l).unwrap();
        let a2 = embed(&lowering(3).unwrap(), Q2, &l).unwrap();
        assert_eq!(a1.commutator(&a2).max_abs(), 0.0);
    }

    #[test]
    fn embed_identity_is_identity() {
        let l = star();
        for (mode, &d) in l.dims().iter().enumerate() {
            let id = embed(&local_identity(d), mode, &l).unwrap();
            assert_eq!(id, Operator::identity(&l));
        }
    }

    #[test]
    fn embedded_number_spectrum() {
        let l = star();
        let n = embed(&number(2).unwrap(), R1, &l).unwrap();
        let (vals, _) = n.eigh().unwrap();
        let zeros = vals.iter().filter(|v| v.abs() < 1e-12).count();
        let ones = vals.iter().filter(|v| (*v - 1.0).abs() < 1e-12).count();
        assert_eq!((zeros, ones), (18, 18));
    }

    #[test]
    fn embed_rejects_mismatch() {
        let l = star();
        assert!(matches!(
            embed(&lowering(3).unwrap(), R1, &l),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(matches!(
            embed(&lowering(2).unwrap(), 4, &l),
            Err(Error::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn projector_properties() {
        let l = star();
        let pee = projector(E, E, &l).unwrap();
        assert_eq!(&pee * &pee, pee);
        assert!(pee.is_hermitian(0.0));
        let pgf = projector(G, F, &l).unwrap();
        assert_eq!(pgf.trace(), C64::new(4.0, 0.0));
        let mut total = Operator::zeros(&l);
        for a in 0..3 {
            for b in 0..3 {
                total = &total + &projector(a, b, &l).unwrap();
            }
        }
        assert_eq!(total, Operator::identity(&l));
        assert!(projector(3, 0, &l).is_err());
    }

    #[test]
    fn projectors_mutually_orthogonal() {
        let l = star();
        let all: Vec<Operator> = (0..9)
            .map(|k| projector(k / 3, k % 3, &l).unwrap())
            .collect();
        for (i, p) in all.iter().enumerate() {
            for (j, q) in all.iter().enumerate() {
                if i != j {
                    assert_eq!((p * q).max_abs(), 0.0);
                }
            }
        }
    }

    #[test]
    fn density_validation() {
        let l = ModeLayout::new(vec![2]).unwrap();
        let ok = Array2::from_diag(&Array1::from(vec![C64::new(0.25, 0.0), C64::new(0.75, 0.0)]));
        assert!(State::density(&l, ok).is_ok());
        let bad_trace = Array2::from_diag_elem(2, C64::new(0.6, 0.0));
        assert!(State::density(&l, bad_trace).is_err());
        let negative =
            Array2::from_diag(&Array1::from(vec![C64::new(1.1, 0.0), C64::new(-0.1, 0.0)]));
        assert!(State::density(&l, negative).is_err());
        let unnormalized = Array1::from(vec![ONE, ONE]);
        assert!(State::ket(&l, unnormalized).is_err());
    }

    #[test]
    fn label_strings() {
        let l = star();
        assert_eq!(l.label_string(13).unwrap(), "|e,g,0,1>");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn local_op(dim: usize, seed: &[f64]) -> Operator {
            let m = Array2::from_shape_fn((dim, dim), |(i, j)| {
                C64::new(seed[(i * dim + j) % seed.len()], seed[(i + 2 * j + 1) % seed.len()])
            });
            Operator::from_matrix(ModeLayout::single_mode(dim), m).unwrap()
        }

        proptest! {
            #[test]
            fn index_bijection(idx in 0usize..36) {
                let l = ModeLayout::star();
                let labels = l.labels_of(idx).unwrap();
                prop_assert_eq!(l.index_of(&labels).unwrap(), idx);
            }

            #[test]
            fn embed_is_multiplicative(
                mode in 0usize..4,
                a in proptest::collection::vec(-1.0f64..1.0, 9),
                b in proptest::collection::vec(-1.0f64..1.0, 9),
            ) {
                let l = ModeLayout::star();
                let d = l.dims()[mode];
                let (x, y) = (local_op(d, &a), local_op(d, &b));
                let lhs = embed(&(&x * &y), mode, &l).unwrap();
                let rhs = &embed(&x, mode, &l).unwrap() * &embed(&y, mode, &l).unwrap();
                prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            }

            #[test]
            fn distinct_modes_commute(
                m1 in 0usize..4,
                m2 in 0usize..4,
                a in proptest::collection::vec(-1.0f64..1.0, 9),
                b in proptest::collection::vec(-1.0f64..1.0, 9),
            ) {
                prop_assume!(m1 != m2);
                let l = ModeLayout::star();
                let x = embed(&local_op(l.dims()[m1], &a), m1, &l).unwrap();
                let y = embed(&local_op(l.dims()[m2], &b), m2, &l).unwrap();
                prop_assert!(x.commutator(&y).max_abs() < 1e-12);
            }
        }
    }
}
