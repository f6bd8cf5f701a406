//! Single-exponential lifetime fits, `A exp(-t/T_L) + C`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Inverse, Solve};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 10;
pub const MAX_ITERATIONS: usize = 500;
pub const GRADIENT_TOL: f64 = 1e-10;
/// Fraction of the trace dropped when no burn-in is given.
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.1;

const STALLED_GRADIENT_TOL: f64 = 1e-8;
const GRID_POINTS: usize = 240;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Lifetime in µs.
    pub t_l: f64,
    /// Amplitude referenced to `t = 0`.
    pub a: f64,
    pub c: f64,
    pub stderr_t_l: f64,
    pub rms_residual: f64,
    pub burn_in_used: f64,
    pub iterations: usize,
    /// Largest normalized correlation between the residual and a Jacobian column.
    pub gradient_norm: f64,
    pub n_points: usize,
}

impl FitResult {
    pub fn model(&self, t: f64) -> f64 {
        self.a * (-t / self.t_l).exp() + self.c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FitOptions {
    /// Samples with `t < burn_in` are discarded. `None` drops the first 10%
    /// of the time span.
    pub burn_in: Option<f64>,
    /// Pin `C` instead of fitting it.
    pub fix_offset: Option<f64>,
}

/// Fits with the default burn-in and a free offset.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<FitResult> {
    fit_exponential_with(times, values, &FitOptions::default())
}

pub fn fit_exponential_with(times: &[f64], values: &[f64], opts: &FitOptions) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: values.len(),
        });
    }
    if times.is_empty() {
        return Err(Error::InvalidInput("empty trace".into()));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("trace contains non-finite values".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("times must be strictly increasing".into()));
    }
    if let Some(v) = values.iter().find(|v| v.abs() >= 1.5) {
        return Err(Error::InvalidInput(format!("value {v} outside (-1.5, 1.5)")));
    }
    let span = times[times.len() - 1] - times[0];
    let burn_in = opts
        .burn_in
        .unwrap_or(times[0] + DEFAULT_BURN_IN_FRACTION * span);
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= burn_in)
        .map(|(t, y)| (*t, *y))
        .unzip();
    if t.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "{} samples after burn-in; need at least {MIN_SAMPLES}",
            t.len()
        )));
    }
    let t0 = t[0];
    let tau: Vec<f64> = t.iter().map(|t| t - t0).collect();
    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let y_range = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if y_range <= 1e-12 * y_scale.max(1.0) {
        return Err(Error::NoDecay);
    }
    let problem = Problem {
        tau,
        y,
        fixed_c: opts.fix_offset,
    };

    let k0 = problem.initial_rate();
    let (sol, iterations) = match problem.levenberg_marquardt(k0) {
        Ok(s) => s,
        Err(_) => (problem.profile_search(k0), MAX_ITERATIONS),
    };
    if !(sol.k > 0.0) || !sol.k.is_finite() {
        return Err(Error::NoDecay);
    }
    let (jac, r) = problem.jacobian_residual(&sol);
    let gradient_norm = normalized_gradient(&jac, &r);
    let rss: f64 = r.iter().map(|v| v * v).sum();
    if gradient_norm > STALLED_GRADIENT_TOL.max(problem.rounding_floor(rss)) {
        return Err(Error::FitNonConvergence { iterations });
    }

    let n = problem.y.len();
    let n_par = jac.ncols();
    let stderr_k = if n > n_par {
        let sigma2 = rss / (n - n_par) as f64;
        let jtj = jac.t().dot(&jac);
        match jtj.inv() {
            Ok(cov) => (sigma2 * cov[[1, 1]]).max(0.0).sqrt(),
            Err(_) => f64::INFINITY,
        }
    } else {
        f64::INFINITY
    };
    Ok(FitResult {
        t_l: 1.0 / sol.k,
        a: sol.a * (sol.k * t0).exp(),
        c: sol.c,
        stderr_t_l: stderr_k / (sol.k * sol.k),
        rms_residual: (rss / n as f64).sqrt(),
        burn_in_used: burn_in,
        iterations,
        gradient_norm,
        n_points: n,
    })
}

#[derive(Clone, Copy, Debug)]
struct Solution {
    a: f64,
    k: f64,
    c: f64,
}

struct Problem {
    tau: Vec<f64>,
    y: Vec<f64>,
    fixed_c: Option<f64>,
}

impl Problem {
    fn n_par(&self) -> usize {
        if self.fixed_c.is_some() {
            2
        } else {
            3
        }
    }

    /// Linear least squares for `(A, C)` at fixed `k`.
    fn linear_fit(&self, k: f64) -> (Solution, f64) {
        let e: Vec<f64> = self.tau.iter().map(|t| (-k * t).exp()).collect();
        let n = self.y.len() as f64;
        let (a, c) = match self.fixed_c {
            Some(c) => {
                let see: f64 = e.iter().map(|v| v * v).sum();
                let sey: f64 = e.iter().zip(&self.y).map(|(e, y)| e * (y - c)).sum();
                (if see > 0.0 { sey / see } else { 0.0 }, c)
            }
            None => {
                let se: f64 = e.iter().sum();
                let see: f64 = e.iter().map(|v| v * v).sum();
                let sy: f64 = self.y.iter().sum();
                let sey: f64 = e.iter().zip(&self.y).map(|(e, y)| e * y).sum();
                let det = see * n - se * se;
                if det.abs() <= 1e-14 * see * n {
                    (0.0, sy / n)
                } else {
                    ((sey * n - se * sy) / det, (see * sy - se * sey) / det)
                }
            }
        };
        let rss = e
            .iter()
            .zip(&self.y)
            .map(|(e, y)| (a * e + c - y).powi(2))
            .sum();
        (Solution { a, k, c }, rss)
    }

    fn rate_bounds(&self) -> (f64, f64) {
        let span = self.tau[self.tau.len() - 1];
        let min_dt = self
            .tau
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        (1e-3 / span, 10.0 / min_dt)
    }

    fn initial_rate(&self) -> f64 {
        let (lo, hi) = self.rate_bounds();
        let ratio = (hi / lo).ln();
        let mut best = (f64::INFINITY, lo);
        for i in 0..GRID_POINTS {
            let k = lo * (ratio * i as f64 / (GRID_POINTS - 1) as f64).exp();
            let (_, rss) = self.linear_fit(k);
            if rss < best.0 {
                best = (rss, k);
            }
        }
        // Log-linear regression about the estimated offset as a competitor.
        if let Some(k) = self.log_linear_rate() {
            if k > 0.0 && self.linear_fit(k).1 < best.0 {
                best.1 = k;
            }
        }
        best.1
    }

    fn log_linear_rate(&self) -> Option<f64> {
        let n = self.y.len();
        let c = self.fixed_c.unwrap_or_else(|| {
            let tail = &self.y[n - n / 10 - 1..];
            let mean = tail.iter().sum::<f64>() / tail.len() as f64;
            let head = self.y[0];
            mean - 0.05 * (head - mean)
        });
        let sign = (self.y[0] - c).signum();
        let pts: Vec<(f64, f64)> = self
            .tau
            .iter()
            .zip(&self.y)
            .filter_map(|(t, y)| {
                let d = sign * (y - c);
                (d > 0.0).then(|| (*t, d.ln()))
            })
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let m = pts.len() as f64;
        let st: f64 = pts.iter().map(|p| p.0).sum();
        let sl: f64 = pts.iter().map(|p| p.1).sum();
        let stt: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let stl: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let det = m * stt - st * st;
        (det > 0.0).then(|| -(m * stl - st * sl) / det)
    }

    fn jacobian_residual(&self, s: &Solution) -> (Array2<f64>, Array1<f64>) {
        let n = self.y.len();
        let mut jac = Array2::zeros((n, self.n_par()));
        let mut r = Array1::zeros(n);
        for (i, (&t, &y)) in self.tau.iter().zip(&self.y).enumerate() {
            let e = (-s.k * t).exp();
            jac[[i, 0]] = e;
            jac[[i, 1]] = -s.a * t * e;
            if self.fixed_c.is_none() {
                jac[[i, 2]] = 1.0;
            }
            r[i] = s.a * e + s.c - y;
        }
        (jac, r)
    }

    fn rss(&self, s: &Solution) -> f64 {
        self.tau
            .iter()
            .zip(&self.y)
            .map(|(t, y)| (s.a * (-s.k * t).exp() + s.c - y).powi(2))
            .sum()
    }

    /// Normalized gradient attainable when `r` is dominated by rounding in `y`.
    fn rounding_floor(&self, rss: f64) -> f64 {
        let y_norm = self.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rss == 0.0 {
            return f64::INFINITY;
        }
        64.0 * f64::EPSILON * y_norm / rss.sqrt()
    }

    fn levenberg_marquardt(&self, k0: f64) -> Result<(Solution, usize)> {
        let mut s = self.linear_fit(k0).0;
        let mut rss = self.rss(&s);
        let mut lambda = 1e-3;
        let mut stalled = 0;
        for it in 1..=MAX_ITERATIONS {
            let (jac, r) = self.jacobian_residual(&s);
            if normalized_gradient(&jac, &r) <= GRADIENT_TOL.max(self.rounding_floor(rss)) {
                return Ok((s, it));
            }
            let jtj = jac.t().dot(&jac);
            let g = jac.t().dot(&r);
            let mut improved = false;
            while lambda < 1e16 {
                let mut m = jtj.clone();
                for d in 0..m.nrows() {
                    m[[d, d]] += lambda * jtj[[d, d]].max(1e-300);
                }
                let step = match m.solve(&g.mapv(|v| -v)) {
                    Ok(step) => step,
                    Err(_) => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let trial = Solution {
                    a: s.a + step[0],
                    k: s.k + step[1],
                    c: if self.fixed_c.is_some() { s.c } else { s.c + step[2] },
                };
                let trial_rss = self.rss(&trial);
                if trial.k.is_finite() && trial_rss <= rss {
                    improved = trial_rss < rss * (1.0 - 1e-12);
                    s = trial;
                    rss = trial_rss;
                    lambda = (lambda / 10.0).max(1e-12);
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                stalled += 1;
                if stalled >= 3 || lambda >= 1e16 {
                    let (jac, r) = self.jacobian_residual(&s);
                    let grad = normalized_gradient(&jac, &r);
                    return if grad <= STALLED_GRADIENT_TOL.max(self.rounding_floor(rss)) {
                        Ok((s, it))
                    } else {
                        Err(Error::FitNonConvergence { iterations: it })
                    };
                }
            } else {
                stalled = 0;
            }
        }
        Err(Error::FitNonConvergence {
            iterations: MAX_ITERATIONS,
        })
    }

    /// Golden-section search of the profiled residual over `ln k`.
    fn profile_search(&self, k0: f64) -> Solution {
        let (lo, hi) = self.rate_bounds();
        let f = |x: f64| self.linear_fit(x.exp()).1;
        let mut a = (k0 / 4.0).max(lo).ln();
        let mut b = (k0 * 4.0).min(hi).ln();
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..200 {
            if (b - a).abs() < 1e-15 {
                break;
            }
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = f(x2);
            }
        }
        self.linear_fit((0.5 * (a + b)).exp()).0
    }
}

fn normalized_gradient(jac: &Array2<f64>, r: &Array1<f64>) -> f64 {
    let rn = r.dot(r).sqrt();
    if rn == 0.0 {
        return 0.0;
    }
    jac.columns()
        .into_iter()
        .map(|col| {
            let cn = col.dot(&col).sqrt();
            if cn == 0.0 {
                0.0
            } else {
                (col.dot(r) / (cn * rn)).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, t_max: f64) -> Vec<f64> {
        (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
    }

    fn no_burn_in() -> FitOptions {
        FitOptions {
            burn_in: Some(0.0),
            ..Default::default()
        }
    }

    #[test]
    fn exact_exponential() {
        let t = grid(201, 200.0);
        let y: Vec<f64> = t.iter().map(|t| (-t / 50.0).exp()).collect();
        let fit = fit_exponential_with(&t, &y, &no_burn_in()).unwrap();
        assert!((fit.t_l - 50.0).abs() / 50.0 < 1e-6, "{fit:?}");
        assert!((fit.a - 1.0).abs() < 1e-6);
        assert!(fit.c.abs() < 1e-6);
        assert!(fit.rms_residual < 1e-8);
    }

    #[test]
    fn noisy_exponential_with_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 1e-4).unwrap();
        let t = grid(401, 200.0);
        let y: Vec<f64> = t
            .iter()
            .map(|t| 0.9 * (-t / 100.0).exp() + 0.05 + noise.sample(&mut rng))
            .collect();
        let fit = fit_exponential_with(&t, &y, &no_burn_in()).unwrap();
        assert!((fit.t_l - 100.0).abs() / 100.0 < 0.01, "{fit:?}");
        assert!(fit.gradient_norm <= 1e-8);
        assert!(fit.stderr_t_l > 0.0 && fit.stderr_t_l < 1.0);
        assert!((fit.rms_residual - 1e-4).abs() < 3e-5);
    }

    #[test]
    fn long_lifetime_short_window() {
        // Window covers a small fraction of a lifetime, as in the long-T1 runs.
        let t = grid(201, 200.0);
        let y: Vec<f64> = t.iter().map(|t| 0.97 * (-t / 900.0).exp() + 0.01).collect();
        let fit = fit_exponential_with(
            &t,
            &y,
            &FitOptions {
                burn_in: Some(20.0),
                fix_offset: Some(0.01),
            },
        )
        .unwrap();
        assert!((fit.t_l - 900.0).abs() / 900.0 < 1e-6, "{fit:?}");
    }

    #[test]
    fn default_burn_in_is_ten_percent() {
        let t = grid(201, 200.0);
        let y: Vec<f64> = t
            .iter()
            .map(|t| 0.8 * (-t / 40.0).exp() + 0.2 * (-t).exp() + 0.1)
            .collect();
        let fit = fit_exponential(&t, &y).unwrap();
        assert_eq!(fit.burn_in_used, 20.0);
        assert_eq!(fit.n_points, 181);
        assert!((fit.t_l - 40.0).abs() / 40.0 < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        let t = grid(50, 10.0);
        assert!(matches!(
            fit_exponential(&t, &vec![1.0 - 1e-16; 50]),
            Err(Error::NoDecay)
        ));
        assert!(matches!(
            fit_exponential(&t[..5], &[0.5; 5]),
            Err(Error::InvalidInput(_))
        ));
        let mut bad = vec![0.5; 50];
        bad[3] = 2.0;
        assert!(matches!(fit_exponential(&t, &bad), Err(Error::InvalidInput(_))));
        assert!(fit_exponential(&t, &[0.5; 49]).is_err());
    }

    #[test]
    fn growing_trace_is_no_decay() {
        let t = grid(100, 10.0);
        let y: Vec<f64> = t.iter().map(|t| 0.1 * (t / 10.0).exp()).collect();
        assert!(fit_exponential_with(&t, &y, &no_burn_in()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn time_shift_invariance(
                tl in 5.0f64..400.0,
                amp in 0.2f64..1.0,
                off in -0.2f64..0.2,
                shift in 0.0f64..100.0,
                seed in 0u64..1000,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let noise = Normal::new(0.0, 1e-3).unwrap();
                let t = grid(121, 120.0);
                let y: Vec<f64> = t.iter().map(|t| amp * (-t / tl).exp() + off + noise.sample(&mut rng)).collect();
                let shifted: Vec<f64> = t.iter().map(|t| t + shift).collect();
                let a = fit_exponential_with(&t, &y, &no_burn_in());
                let b = fit_exponential_with(&shifted, &y, &FitOptions { burn_in: Some(shift), ..Default::default() });
                match (a, b) {
                    (Ok(a), Ok(b)) => {
                        prop_assert!((a.t_l - b.t_l).abs() <= 1e-6 * a.t_l);
                        let rescaled = a.a * (shift / a.t_l).exp();
                        prop_assert!((b.a - rescaled).abs() <= 1e-6 * rescaled.abs());
                    }
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
                }
            }

            #[test]
            fn residual_orthogonal_to_jacobian(
                tl in 5.0f64..300.0,
                amp in 0.2f64..1.0,
                off in -0.2f64..0.2,
                seed in 0u64..1000,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let noise = Normal::new(0.0, 1e-3).unwrap();
                let t = grid(150, 150.0);
                let y: Vec<f64> = t.iter().map(|t| amp * (-t / tl).exp() + off + noise.sample(&mut rng)).collect();
                if let Ok(fit) = fit_exponential_with(&t, &y, &no_burn_in()) {
                    prop_assert!(fit.gradient_norm <= 1e-8);
                }
            }
        }
    }
}
