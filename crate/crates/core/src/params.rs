//! Hyperparameter containers and their flat, unconstrained vector view.
//!
//! Flat layout: `[kernel…, φ lower (row-major, i>j)…, ln φᵢᵢ…, ln(ν−2)?]`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Lower-triangular factor `Φ` of the row covariance `Ω = ΦΦᵀ`, with the
/// diagonal stored as logs so it stays positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RowCovParams {
    pub phi_lower: Vec<f64>,
    pub log_diag: Vec<f64>,
}

impl RowCovParams {
    pub fn identity(d: usize) -> Self {
        Self {
            phi_lower: vec![0.0; d * (d.saturating_sub(1)) / 2],
            log_diag: vec![0.0; d],
        }
    }

    /// Parameters reproducing a given SPD `Ω` (via its Cholesky factor).
    pub fn from_omega(omega: &DMatrix<f64>) -> Result<Self> {
        let chol = omega
            .clone()
            .cholesky()
            .ok_or_else(|| Error::not_pd("Ω"))?;
        let l = chol.unpack();
        let d = l.nrows();
        let mut rc = Self::identity(d);
        let mut k = 0;
        for i in 1..d {
            for j in 0..i {
                rc.phi_lower[k] = l[(i, j)];
                k += 1;
            }
        }
        for i in 0..d {
            rc.log_diag[i] = l[(i, i)].ln();
        }
        Ok(rc)
    }

    pub fn d(&self) -> usize {
        self.log_diag.len()
    }

    pub fn n_params(&self) -> usize {
        self.phi_lower.len() + self.log_diag.len()
    }

    pub fn phi(&self) -> DMatrix<f64> {
        let d = self.d();
        let mut phi = DMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in 0..i {
                phi[(i, j)] = self.phi_lower[k];
                k += 1;
            }
            phi[(i, i)] = self.log_diag[i].exp();
        }
        phi
    }

    pub fn omega(&self) -> DMatrix<f64> {
        let phi = self.phi();
        &phi * phi.transpose()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = self.phi_lower.clone();
        v.extend_from_slice(&self.log_diag);
        v
    }

    pub fn set_params(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "row covariance expects {} parameters, got {}",
                self.n_params(),
                v.len()
            )));
        }
        let m = self.phi_lower.len();
        self.phi_lower.copy_from_slice(&v[..m]);
        self.log_diag.copy_from_slice(&v[m..]);
        Ok(())
    }

    /// Chains a symmetric sensitivity `G = ∂L/∂Ω` through `Ω = ΦΦᵀ`.
    ///
    /// `∂Ω/∂φᵢⱼ = EᵢⱼΦᵀ + ΦEⱼᵢ`, so `∂L/∂φᵢⱼ = 2(GΦ)ᵢⱼ`; the log-diagonal
    /// entries pick up the extra factor `φᵢᵢ`.
    pub fn chain_omega_gradient(&self, g: &DMatrix<f64>, phi: &DMatrix<f64>) -> Vec<f64> {
        let d = self.d();
        let gp = g * phi;
        let mut out = Vec::with_capacity(self.n_params());
        for i in 0..d {
            for j in 0..i {
                out.push(2.0 * gp[(i, j)]);
            }
        }
        for i in 0..d {
            out.push(2.0 * gp[(i, i)] * phi[(i, i)]);
        }
        out
    }
}

/// Complete hyperparameter set of an MV-GPR (`lognu_minus2 = None`) or MV-TPR
/// model. `ν = 2 + exp(lognu_minus2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub kernel: KernelSpec,
    pub rowcov: RowCovParams,
    pub lognu_minus2: Option<f64>,
}

impl HyperParams {
    pub fn new(kernel: KernelSpec, rowcov: RowCovParams, lognu_minus2: Option<f64>) -> Self {
        Self {
            kernel,
            rowcov,
            lognu_minus2,
        }
    }

    pub fn nu(&self) -> Option<f64> {
        self.lognu_minus2.map(|v| 2.0 + v.exp())
    }

    pub fn d(&self) -> usize {
        self.rowcov.d()
    }

    pub fn len(&self) -> usize {
        self.kernel.n_params() + self.rowcov.n_params() + usize::from(self.lognu_minus2.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.kernel.params();
        v.extend(self.rowcov.params());
        if let Some(nu) = self.lognu_minus2 {
            v.push(nu);
        }
        v
    }

    /// Overwrites every coordinate from a flat vector of matching layout.
    pub fn set_from_slice(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::Dimension(format!(
                "hyperparameter vector has length {}, expected {}",
                v.len(),
                self.len()
            )));
        }
        let k = self.kernel.n_params();
        let r = self.rowcov.n_params();
        self.kernel.set_params(&v[..k])?;
        self.rowcov.set_params(&v[k..k + r])?;
        if self.lognu_minus2.is_some() {
            self.lognu_minus2 = Some(v[k + r]);
        }
        Ok(())
    }

    pub fn with_values(&self, v: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_from_slice(v)?;
        Ok(out)
    }

    /// Flat index of `ln φ₁₁`, pinned to zero during fitting to remove the
    /// `(cΣ, Ω/c)` scale ambiguity.
    pub fn scale_anchor_index(&self) -> usize {
        self.kernel.n_params() + self.rowcov.phi_lower.len()
    }

    pub fn nu_index(&self) -> Option<usize> {
        self.lognu_minus2.map(|_| self.len() - 1)
    }
}
