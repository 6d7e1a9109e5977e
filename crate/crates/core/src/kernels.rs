//! Squared-exponential covariance functions.
//!
//! All positive hyperparameters are stored as logs: `ln ℓ` (one per input
//! dimension for ARD), `ln s_f²` and `ln σ_n²`. The flat parameter order used by
//! [`KernelSpec::params`] and [`KernelSpec::gram_grad`] is
//! `[ln ℓ₁, …, ln ℓ_k, ln s_f², ln σ_n²]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// Isotropic, one shared length scale.
    Se,
    /// Automatic relevance determination, one length scale per input.
    SeArd,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Se => "se",
            KernelFamily::SeArd => "seard",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "se" => Ok(KernelFamily::Se),
            "seard" | "se_ard" | "ard" => Ok(KernelFamily::SeArd),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub log_lengthscales: Vec<f64>,
    pub log_signal_variance: f64,
    pub log_noise_variance: f64,
}

impl KernelSpec {
    pub fn se(log_lengthscale: f64, log_signal_variance: f64, log_noise_variance: f64) -> Self {
        Self {
            family: KernelFamily::Se,
            log_lengthscales: vec![log_lengthscale],
            log_signal_variance,
            log_noise_variance,
        }
    }

    pub fn se_ard(log_lengthscales: Vec<f64>, log_signal_variance: f64, log_noise_variance: f64) -> Self {
        Self {
            family: KernelFamily::SeArd,
            log_lengthscales,
            log_signal_variance,
            log_noise_variance,
        }
    }

    /// A kernel of the given family for `p` inputs with all log-parameters zero.
    pub fn unit(family: KernelFamily, p: usize) -> Self {
        let k = match family {
            KernelFamily::Se => 1,
            KernelFamily::SeArd => p,
        };
        Self {
            family,
            log_lengthscales: vec![0.0; k],
            log_signal_variance: 0.0,
            log_noise_variance: 0.0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.log_lengthscales.len() + 2
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn noise_variance(&self) -> f64 {
        self.log_noise_variance.exp()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_signal_variance);
        v.push(self.log_noise_variance);
        v
    }

    pub fn set_params(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "kernel expects {} parameters, got {}",
                self.n_params(),
                v.len()
            )));
        }
        let k = self.log_lengthscales.len();
        self.log_lengthscales.copy_from_slice(&v[..k]);
        self.log_signal_variance = v[k];
        self.log_noise_variance = v[k + 1];
        Ok(())
    }

    /// Checks the input dimension against the stored length scales.
    pub fn check_inputs(&self, p: usize) -> Result<()> {
        match self.family {
            KernelFamily::Se if self.log_lengthscales.len() != 1 => Err(Error::InvalidParameter(
                "SE kernel takes exactly one length scale".into(),
            )),
            KernelFamily::SeArd if self.log_lengthscales.len() != p => Err(Error::Dimension(format!(
                "SEard kernel has {} length scales for {p} inputs",
                self.log_lengthscales.len()
            ))),
            _ => Ok(()),
        }
    }

    /// `1/ℓᵢ²` for each of the `p` input dimensions.
    fn inv_sq_lengthscales(&self, p: usize) -> Vec<f64> {
        (0..p)
            .map(|i| {
                let ln_l = match self.family {
                    KernelFamily::Se => self.log_lengthscales[0],
                    KernelFamily::SeArd => self.log_lengthscales[i],
                };
                (-2.0 * ln_l).exp()
            })
            .collect()
    }

    fn eval_scaled(&self, sf2: f64, inv: &[f64], x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(inv)
            .map(|((a, b), w)| (a - b) * (a - b) * w)
            .sum();
        sf2 * (-0.5 * r2).exp()
    }

    /// Noise-free covariance `k(x, x′)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let inv = self.inv_sq_lengthscales(x.len());
        self.eval_scaled(self.signal_variance(), &inv, x, y)
    }

    /// Cross-covariance matrix between the rows of `x1` and the rows of `x2`.
    pub fn gram(&self, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x1.ncols() != x2.ncols() {
            return Err(Error::Dimension(format!(
                "inputs have {} and {} columns",
                x1.ncols(),
                x2.ncols()
            )));
        }
        self.check_inputs(x1.ncols())?;
        let r1 = rows_of(x1);
        let r2 = rows_of(x2);
        let inv = self.inv_sq_lengthscales(x1.ncols());
        let sf2 = self.signal_variance();
        Ok(DMatrix::from_fn(r1.len(), r2.len(), |i, j| {
            self.eval_scaled(sf2, &inv, &r1[i], &r2[j])
        }))
    }

    /// Symmetric Gram matrix of `x` against itself.
    fn gram_sym(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_inputs(x.ncols())?;
        let rows = rows_of(x);
        let n = rows.len();
        let sf2 = self.signal_variance();
        let inv = self.inv_sq_lengthscales(x.ncols());
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = sf2;
            for j in 0..i {
                let v = self.eval_scaled(sf2, &inv, &rows[i], &rows[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// `K′ = K + σ_n² I`.
    pub fn gram_noisy(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut k = self.gram_sym(x)?;
        let sn2 = self.noise_variance();
        for i in 0..k.nrows() {
            k[(i, i)] += sn2;
        }
        Ok(k)
    }

    /// `∂K′/∂(log-parameter which)`.
    pub fn gram_grad(&self, x: &DMatrix<f64>, which: usize) -> Result<DMatrix<f64>> {
        if which >= self.n_params() {
            return Err(Error::InvalidParameter(format!(
                "kernel parameter index {which} out of range (have {})",
                self.n_params()
            )));
        }
        let mut grads = self.gram_grads(x)?;
        Ok(grads.swap_remove(which))
    }

    /// `Σᵢⱼ Wᵢⱼ ∂K′ᵢⱼ/∂θ` for every log-parameter θ, in parameter order,
    /// without forming the derivative matrices.
    pub fn gram_grad_contract(&self, x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_inputs(x.ncols())?;
        let n = x.nrows();
        if w.shape() != (n, n) {
            return Err(Error::Dimension(format!("weight matrix is {:?}, expected ({n}, {n})", w.shape())));
        }
        let p = x.ncols();
        let rows = rows_of(x);
        let sf2 = self.signal_variance();
        let inv = self.inv_sq_lengthscales(p);
        let n_len = self.log_lengthscales.len();
        let mut acc = vec![0.0; n_len + 2];
        let mut scaled = vec![0.0; p];
        for i in 0..n {
            acc[n_len] += w[(i, i)] * sf2;
            for j in 0..i {
                let mut r2 = 0.0;
                for c in 0..p {
                    let diff = rows[i][c] - rows[j][c];
                    scaled[c] = diff * diff * inv[c];
                    r2 += scaled[c];
                }
                let u = (w[(i, j)] + w[(j, i)]) * sf2 * (-0.5 * r2).exp();
                match self.family {
                    KernelFamily::Se => acc[0] += u * r2,
                    KernelFamily::SeArd => {
                        for c in 0..p {
                            acc[c] += u * scaled[c];
                        }
                    }
                }
                acc[n_len] += u;
            }
        }
        acc[n_len + 1] = w.diagonal().sum() * self.noise_variance();
        Ok(acc)
    }

    /// All `∂K′/∂(log-parameter)` matrices in parameter order.
    pub fn gram_grads(&self, x: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
        self.check_inputs(x.ncols())?;
        let n = x.nrows();
        let p = x.ncols();
        let n_len = self.log_lengthscales.len();
        let k = self.gram_sym(x)?;
        let inv_all = self.inv_sq_lengthscales(p);
        let mut out = Vec::with_capacity(self.n_params());
        for l in 0..n_len {
            // ∂k/∂ln ℓ = k · (scaled squared distance along the dims governed by ℓ)
            let dims: Vec<usize> = match self.family {
                KernelFamily::Se => (0..p).collect(),
                KernelFamily::SeArd => vec![l],
            };
            let inv = match self.family {
                KernelFamily::Se => (-2.0 * self.log_lengthscales[0]).exp(),
                KernelFamily::SeArd => inv_all[l],
            };
            let g = DMatrix::from_fn(n, n, |i, j| {
                let r2: f64 = dims
                    .iter()
                    .map(|&c| {
                        let diff = x[(i, c)] - x[(j, c)];
                        diff * diff
                    })
                    .sum();
                k[(i, j)] * r2 * inv
            });
            out.push(g);
        }
        out.push(k);
        out.push(DMatrix::identity(n, n) * self.noise_variance());
        Ok(out)
    }
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect()
}
