#![allow(dead_code)]

pub mod oracles;

use mvproc::backtest::PriceSeries;
use mvproc::{HyperParams, KernelSpec, RowCovParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

/// A random problem instance: inputs, outputs and a full hyperparameter set.
pub struct Instance {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub params: HyperParams,
}

pub fn random_instance(seed: u64, student_t: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=20);
    let d = rng.random_range(1..=3);
    let p = rng.random_range(1..=4);
    let ard = rng.random_bool(0.5);
    let x = random_matrix(&mut rng, n, p, -2.0, 2.0);
    let y = random_matrix(&mut rng, n, d, -2.0, 2.0);
    let kernel = if ard {
        KernelSpec::se_ard(
            (0..p).map(|_| rng.random_range(-0.5..1.0)).collect(),
            rng.random_range(-0.5..0.5),
            rng.random_range(-2.0..-0.5),
        )
    } else {
        KernelSpec::se(rng.random_range(-0.5..1.0), rng.random_range(-0.5..0.5), rng.random_range(-2.0..-0.5))
    };
    let mut rowcov = RowCovParams::identity(d);
    for v in rowcov.phi_lower.iter_mut() {
        *v = rng.random_range(-0.6..0.6);
    }
    for v in rowcov.log_diag.iter_mut() {
        *v = rng.random_range(-0.4..0.4);
    }
    let lognu = student_t.then(|| rng.random_range(-0.5..2.0));
    Instance {
        x,
        y,
        params: HyperParams::new(kernel, rowcov, lognu),
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Largest violation of `|a − b| ≤ rel·max(1, |b|)` over coordinates.
pub fn worst_relative(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn dates(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("D{i:05}")).collect()
}

/// Random walk with an adjustment factor that steps up now and then, so
/// adjusted and raw prices differ.
pub fn random_series(name: &str, n: usize, seed: u64) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut close, mut factor) = (50.0, 0.8);
    let (mut o, mut c, mut a) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let open: f64 = close * (rng.random_range(-0.01..0.01) as f64).exp();
        close = open * (rng.random_range(-0.02..0.02) as f64).exp();
        if rng.random_bool(0.02) {
            factor *= 1.01;
        }
        o.push(open);
        c.push(close);
        a.push(close * factor);
    }
    PriceSeries::new(name, dates(n), o, c, a).unwrap()
}
