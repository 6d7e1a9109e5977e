//! Multivariate Student-t process regression.
//!
//! `Y ~ MT(ν, 0, K′, Ω)`. With `U = K′ + YΩ⁻¹Yᵀ` and `τ = ν + n − 1` the
//! negative log marginal likelihood is
//! `½(τ+d)ln|U| − ½τ ln|K′| + ln Γₙ(τ/2) − ln Γₙ((τ+d)/2) + n/2·ln|Ω| + dn/2·ln π`.
//!
//! Everything is evaluated through the d×d matrix `Q = YᵀK′⁻¹Y`:
//! `ln|U| − ln|K′| = ln|I + Ω⁻¹Q|` and `U⁻¹ = K′⁻¹ − α(Ω + Q)⁻¹αᵀ` with
//! `α = K′⁻¹Y`. Large ν paired with a large kernel scale is the Gaussian
//! limit, and the optimizer does walk there; in that regime the direct
//! n×n form cancels catastrophically.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{ln_det_unit_plus, symmetrize, CholeskyFactor};
use crate::model::{self, Family, Prediction, TrainedModel};
use crate::mvgp::check_data;
use crate::optimizer::FitOptions;
use crate::params::HyperParams;
use crate::special::{ln_gamma_n_shift, psi_n_shift};

pub(crate) fn eval(
    params: &HyperParams,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    check_data(params, x, y)?;
    let lognu = params.lognu_minus2.ok_or_else(|| {
        Error::InvalidParameter("Student-t likelihood needs degrees of freedom".into())
    })?;
    let nu = 2.0 + lognu.exp();
    if !nu.is_finite() {
        return Err(Error::InvalidParameter(format!("degrees of freedom overflow (ln(ν−2) = {lognu})")));
    }
    let (n, d) = y.shape();
    let (nf, df) = (n as f64, d as f64);
    let tau = nu + nf - 1.0;

    let kp = params.kernel.gram_noisy(x)?;
    let kc = CholeskyFactor::new(&kp, "K′")?;
    let phi = params.rowcov.phi();
    let oc = CholeskyFactor::from_lower(phi.clone())?;

    let alpha_k = kc.solve(y);
    let q = symmetrize(y.transpose() * &alpha_k);
    // Φ⁻¹QΦ⁻ᵀ shares its spectrum with Ω⁻¹Q
    let half = oc.solve_lower(&q);
    let whitened = oc.solve_lower(&half.transpose());
    let s = ln_det_unit_plus(&whitened, "Ω⁻¹YᵀK′⁻¹Y")?;

    let value = 0.5 * (tau + df) * s + 0.5 * df * kc.ln_det() - ln_gamma_n_shift(n, 0.5 * tau, 0.5 * df)?
        + 0.5 * nf * oc.ln_det()
        + 0.5 * df * nf * std::f64::consts::PI.ln();
    if !with_grad {
        return Ok((value, None));
    }

    let mut grad = Vec::with_capacity(params.len());
    let mc = CholeskyFactor::new(&symmetrize(phi.clone() * phi.transpose() + &q), "Ω + YᵀK′⁻¹Y")?;
    let m_inv = mc.inverse();
    // ∂L/∂K′ = ½d K′⁻¹ − ½(τ+d) α (Ω+Q)⁻¹ αᵀ
    let dk = kc.inverse() * (0.5 * df) - &alpha_k * &m_inv * alpha_k.transpose() * (0.5 * (tau + df));
    grad.extend(params.kernel.gram_grad_contract(x, &dk)?);
    // ∂L/∂Ω = ½n Ω⁻¹ − ½(τ+d) Ω⁻¹Q(Ω+Q)⁻¹
    let omega_inv = oc.inverse();
    let g_omega = symmetrize(&omega_inv * (0.5 * nf) - &omega_inv * &q * &m_inv * (0.5 * (tau + df)));
    grad.extend(params.rowcov.chain_omega_gradient(&g_omega, &phi));
    // ∂L/∂ν, chained through ν = 2 + exp(lognu)
    let dnu = 0.5 * s - 0.5 * psi_n_shift(n, 0.5 * tau, 0.5 * df)?;
    grad.push(dnu * lognu.exp());
    Ok((value, Some(grad)))
}

pub fn nlml(params: &HyperParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    Ok(eval(params, x, y, false)?.0)
}

/// Gradient of [`nlml`] over the flat hyperparameter vector, the last entry
/// being `∂L/∂ln(ν−2)`.
pub fn nlml_grad(params: &HyperParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(eval(params, x, y, true)?.1.expect("gradient requested"))
}

pub fn nlml_and_grad(params: &HyperParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let (v, g) = eval(params, x, y, true)?;
    Ok((v, g.expect("gradient requested")))
}

pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, spec: &KernelSpec, opts: &FitOptions) -> Result<TrainedModel> {
    model::fit(Family::Tp, x, y, spec, opts)
}

pub fn predict(model: &TrainedModel, xstar: &DMatrix<f64>) -> Result<Prediction> {
    if model.family() != Family::Tp {
        return Err(Error::InvalidParameter(
            "mvtp::predict called on a Gaussian model".into(),
        ));
    }
    model.predict(xstar)
}
