//! Dense complex linear algebra used across the crate: Hermitian
//! eigendecomposition, the matrix exponential, and a few small helpers.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use ndarray_linalg::{Eigh, Inverse, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Conjugate transpose.
pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: ArrayView2<C64>, b: ArrayView2<C64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0_f64, |acc, x, y| acc.max((x - y).norm()))
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermiticity_error(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Maximum absolute column sum.
pub fn one_norm(m: &Array2<C64>) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigenvalues (ascending) and column eigenvectors of a Hermitian matrix.
///
/// Only the lower triangle is read.
pub fn eigh(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let (vals, vecs) = m.eigh(UPLO::Lower)?;
    Ok((vals, vecs))
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &Array2<C64>) -> Result<f64> {
    let herm = (m + &dagger(m)).mapv(|z| z * 0.5);
    let (vals, _) = eigh(&herm)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Accumulate `coef * (a ⊗ b)` into `out`, skipping zero entries of `a`.
///
/// `out` must be `(a.nrows() * b.nrows()) x (a.ncols() * b.ncols())`.
pub fn kron_add(out: &mut Array2<C64>, coef: C64, a: &Array2<C64>, b: &Array2<C64>) {
    let (br, bc) = b.dim();
    debug_assert_eq!(out.nrows(), a.nrows() * br);
    debug_assert_eq!(out.ncols(), a.ncols() * bc);
    for ((p, q), &apq) in a.indexed_iter() {
        if apq == ZERO {
            continue;
        }
        let scale = coef * apq;
        for ((r, c), &brc) in b.indexed_iter() {
            if brc != ZERO {
                out[[p * br + r, q * bc + c]] += scale * brc;
            }
        }
    }
}

// Coefficients and thresholds of the scaling-and-squaring method with
// diagonal Padé approximants of degree 3, 5, 7, 9 and 13.
const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn scaled(m: &Array2<C64>, s: f64) -> Array2<C64> {
    m.mapv(|z| z * s)
}

fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, ONE)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant, selecting the lowest degree that reaches double precision
/// for the given 1-norm.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::Expm {
            norm,
            reason: "input has non-finite entries".into(),
        });
    }

    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            let (u, v) = pade_low(a, coeffs);
            return finish(pade_solve(&u, &v)?, 0, norm);
        }
    }

    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let a_scaled = scaled(a, 0.5_f64.powi(s));
    let (u, v) = pade_13(&a_scaled);
    finish(pade_solve(&u, &v)?, s, norm)
}

fn finish(mut r: Array2<C64>, squarings: i32, norm: f64) -> Result<Array2<C64>> {
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    if r.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(r)
    } else {
        Err(Error::Expm {
            norm,
            reason: format!("non-finite result after {squarings} squarings"),
        })
    }
}

fn pade_low(a: &Array2<C64>, b: &[f64]) -> (Array2<C64>, Array2<C64>) {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut odd = scaled(&identity(n), b[1]);
    let mut even = scaled(&identity(n), b[0]);
    let mut power = a2.clone();
    let mut k = 2;
    while k < b.len() {
        even = even + scaled(&power, b[k]);
        odd = odd + scaled(&power, b[k + 1]);
        k += 2;
        if k < b.len() {
            power = power.dot(&a2);
        }
    }
    (a.dot(&odd), even)
}

fn pade_13(a: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
    let b = &PADE_13;
    let n = a.nrows();
    let ident = identity(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let inner_u = scaled(&a6, b[13]) + scaled(&a4, b[11]) + scaled(&a2, b[9]);
    let u = a.dot(
        &(a6.dot(&inner_u)
            + scaled(&a6, b[7])
            + scaled(&a4, b[5])
            + scaled(&a2, b[3])
            + scaled(&ident, b[1])),
    );
    let inner_v = scaled(&a6, b[12]) + scaled(&a4, b[10]) + scaled(&a2, b[8]);
    let v = a6.dot(&inner_v)
        + scaled(&a6, b[6])
        + scaled(&a4, b[4])
        + scaled(&a2, b[2])
        + scaled(&ident, b[0]);
    (u, v)
}

fn pade_solve(u: &Array2<C64>, v: &Array2<C64>) -> Result<Array2<C64>> {
    let q = v - u;
    let p = v + u;
    let q_inv = q.inv().map_err(|e| Error::Expm {
        norm: one_norm(u),
        reason: format!("Padé denominator is singular: {e}"),
    })?;
    Ok(q_inv.dot(&p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_expm(a: &Array2<C64>) -> Array2<C64> {
        // Truncated series after scaling; adequate as an oracle for small norms.
        let s = 8;
        let a = scaled(a, 0.5_f64.powi(s));
        let n = a.nrows();
        let mut term = identity(n);
        let mut sum = identity(n);
        for k in 1..30 {
            term = term.dot(&a).mapv(|z| z / k as f64);
            sum = sum + &term;
        }
        for _ in 0..s {
            sum = sum.dot(&sum);
        }
        sum
    }

    fn sample(n: usize, scale: f64) -> Array2<C64> {
        Array2::from_shape_fn((n, n), |(i, j)| {
            C64::new(
                (((i * 7 + j * 13) % 17) as f64 - 8.0) / 8.0,
                (((i * 5 + j * 3) % 11) as f64 - 5.0) / 5.0,
            ) * scale
        })
    }

    #[test]
    fn expm_matches_series_across_degrees() {
        for &scale in &[1e-3, 2e-2, 0.1, 0.3, 1.0, 4.0] {
            let a = sample(6, scale);
            let got = expm(&a).unwrap();
            let want = taylor_expm(&a);
            let err = max_abs_diff(got.view(), want.view());
            let mag = want.iter().map(|z| z.norm()).fold(1.0, f64::max);
            assert!(err / mag < 1e-11, "scale {scale}: err {err:e}");
        }
    }

    #[test]
    fn expm_of_diagonal_is_elementwise() {
        let d = [C64::new(-1.0, 3.0), C64::new(0.5, -20.0), C64::new(-40.0, 0.0)];
        let a = Array2::from_diag(&Array1::from(d.to_vec()));
        let e = expm(&a).unwrap();
        for (k, z) in d.iter().enumerate() {
            assert!((e[[k, k]] - z.exp()).norm() < 1e-12 * z.exp().norm().max(1.0));
        }
        assert!(e[[0, 1]].norm() < 1e-14);
    }

    #[test]
    fn expm_rejects_non_finite() {
        let mut a = identity(2);
        a[[0, 1]] = C64::new(f64::NAN, 0.0);
        assert!(matches!(expm(&a), Err(Error::Expm { .. })));
    }

    #[test]
    fn kron_add_matches_definition() {
        let a = sample(2, 1.0);
        let b = sample(3, 0.5);
        let mut out = Array2::zeros((6, 6));
        kron_add(&mut out, ONE, &a, &b);
        for i in 0..6 {
            for j in 0..6 {
                let want = a[[i / 3, j / 3]] * b[[i % 3, j % 3]];
                assert!((out[[i, j]] - want).norm() < 1e-15);
            }
        }
    }
}
