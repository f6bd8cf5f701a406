use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use starlab_core::fitters::fit_exponential;
use starlab_core::rates::{pl_closed_form, rate_ode_oracle};

fn fitting(c: &mut Criterion) {
    let times: Vec<f64> = (0..8000).map(|k| k as f64 * 0.1).collect();
    let values: Vec<f64> = times
        .iter()
        .map(|t| 0.93 * (-t / 886.0).exp() + 0.02 * (1.3 * t).sin() * (-t / 5.0).exp() + 0.01)
        .collect();
    c.bench_function("fit_exponential_8000", |b| {
        b.iter(|| fit_exponential(black_box(&times), black_box(&values)).unwrap())
    });

    let grid: Vec<f64> = (1..=800).map(|k| k as f64).collect();
    c.bench_function("pl_closed_form_800", |b| {
        b.iter(|| grid.iter().map(|&t| pl_closed_form(t, black_box(0.0167), 1.2)).sum::<f64>())
    });
    c.bench_function("rate_ode_oracle_800", |b| {
        b.iter(|| rate_ode_oracle(black_box(0.0167), 1.2, 0.01, 0.02, &grid).unwrap())
    });
}

criterion_group!(benches, fitting);
criterion_main!(benches);
