//! Independent reference implementations the library is checked against.

use super::random_matrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

pub fn spd(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, k, k, -1.0, 1.0);
    &a * a.transpose() + DMatrix::identity(k, k) * 0.5
}

/// Dense `Σ ⊗ Ω` indexed so that entry (i, j) of X sits at `i·d + j`.
pub fn kron_dense(sigma: &DMatrix<f64>, omega: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = (sigma.nrows(), omega.nrows());
    DMatrix::from_fn(n * d, n * d, |r, c| sigma[(r / d, c / d)] * omega[(r % d, c % d)])
}

pub fn gaussian_oracle(x: &DMatrix<f64>, m: &DMatrix<f64>, sigma: &DMatrix<f64>, omega: &DMatrix<f64>) -> f64 {
    let (n, d) = x.shape();
    let cov = kron_dense(sigma, omega);
    let r = DVector::from_fn(n * d, |k, _| x[(k / d, k % d)] - m[(k / d, k % d)]);
    let chol = cov.cholesky().expect("oracle covariance is SPD");
    let z = chol.solve(&r);
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (r.dot(&z) + logdet + (n * d) as f64 * (2.0 * PI).ln())
}

pub fn ln_mv_gamma(n: usize, a: f64) -> f64 {
    let mut s = n as f64 * (n as f64 - 1.0) / 4.0 * PI.ln();
    for j in 1..=n {
        s += ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    s
}

/// Dense determinant form of the matrix-t density.
pub fn student_oracle(nu: f64, x: &DMatrix<f64>, m: &DMatrix<f64>, sigma: &DMatrix<f64>, omega: &DMatrix<f64>) -> f64 {
    let (n, d) = x.shape();
    let (nf, df) = (n as f64, d as f64);
    let r = x - m;
    let si = sigma.clone().try_inverse().unwrap();
    let oi = omega.clone().try_inverse().unwrap();
    let inner = DMatrix::identity(n, n) + &si * &r * &oi * r.transpose();
    ln_mv_gamma(n, 0.5 * (nu + df + nf - 1.0)) - ln_mv_gamma(n, 0.5 * (nu + nf - 1.0)) - 0.5 * nf * df * PI.ln()
        - 0.5 * df * sigma.determinant().ln()
        - 0.5 * nf * omega.determinant().ln()
        - 0.5 * (nu + df + nf - 1.0) * inner.determinant().ln()
}

pub struct Case {
    pub x: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

pub fn case(seed: u64, max_n: usize, max_d: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_n);
    let d = rng.random_range(2..=max_d);
    Case {
        x: random_matrix(&mut rng, n, d, -1.5, 1.5),
        m: random_matrix(&mut rng, n, d, -0.5, 0.5),
        sigma: spd(&mut rng, n),
        omega: spd(&mut rng, d),
    }
}

pub struct Scalar {
    pub ell: Vec<f64>,
    pub sf2: f64,
    pub sn2: f64,
}

impl Scalar {
    fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a.iter().zip(b).zip(&self.ell).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
        self.sf2 * (-0.5 * r2).exp()
    }
}

pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

pub fn solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (z[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

pub struct ScalarPrediction {
    pub nlml: f64,
    pub grad: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub fn scalar_gp(g: &Scalar, x: &[Vec<f64>], y: &[f64], xs: &[Vec<f64>]) -> ScalarPrediction {
    let n = x.len();
    let mut kp = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            kp[i][j] = g.k(&x[i], &x[j]) + if i == j { g.sn2 } else { 0.0 };
        }
    }
    let l = cholesky(&kp);
    let alpha = solve(&l, y);
    let logdet: f64 = 2.0 * (0..n).map(|i| l[i][i].ln()).sum::<f64>();
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let nlml = 0.5 * fit + 0.5 * logdet + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // K′⁻¹ column by column
    let inv: Vec<Vec<f64>> = (0..n)
        .map(|j| solve(&l, &(0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
        .collect();
    let w = |i: usize, j: usize| inv[j][i] - alpha[i] * alpha[j];
    let mut grad = Vec::new();
    for (dim, ell) in g.ell.iter().enumerate() {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r = (x[i][dim] - x[j][dim]) / ell;
                s += w(i, j) * g.k(&x[i], &x[j]) * r * r;
            }
        }
        grad.push(0.5 * s);
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += w(i, j) * g.k(&x[i], &x[j]);
        }
    }
    grad.push(0.5 * s);
    grad.push(0.5 * g.sn2 * (0..n).map(|i| w(i, i)).sum::<f64>());

    let mut mean = Vec::new();
    let mut var = Vec::new();
    for p in xs {
        let ks: Vec<f64> = x.iter().map(|xi| g.k(p, xi)).collect();
        mean.push(ks.iter().zip(&alpha).map(|(a, b)| a * b).sum());
        let v = solve(&l, &ks);
        var.push(g.k(p, p) + g.sn2 - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>());
    }
    ScalarPrediction { nlml, grad, mean, var }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

