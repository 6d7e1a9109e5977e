//! Multivariate Gaussian process regression.
//!
//! `Y ~ MN(0, K′, Ω)` with `K′ = K + σ_n² I`. The negative log marginal
//! likelihood is
//! `nd/2·ln 2π + d/2·ln|K′| + n/2·ln|Ω| + ½·tr(K′⁻¹ Y Ω⁻¹ Yᵀ)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{symmetrize, CholeskyFactor};
use crate::model::{self, Family, Prediction, TrainedModel};
use crate::optimizer::FitOptions;
use crate::params::HyperParams;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) fn check_data(params: &HyperParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "{} input rows but {} output rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Dimension("no observations".into()));
    }
    if y.ncols() != params.d() {
        return Err(Error::Dimension(format!(
            "{} outputs but row covariance is {}x{}",
            y.ncols(),
            params.d(),
            params.d()
        )));
    }
    params.kernel.check_inputs(x.ncols())
}

pub(crate) fn eval(
    params: &HyperParams,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    check_data(params, x, y)?;
    let (n, d) = y.shape();
    let (nf, df) = (n as f64, d as f64);
    let kp = params.kernel.gram_noisy(x)?;
    let kc = CholeskyFactor::new(&kp, "K′")?;
    let phi = params.rowcov.phi();
    let oc = CholeskyFactor::from_lower(phi.clone())?;

    let alpha_k = kc.solve(y);
    let q = symmetrize(y.transpose() * &alpha_k);
    let omega_inv = oc.inverse();
    let oiq = &omega_inv * &q;
    let value =
        0.5 * nf * df * LN_2PI + 0.5 * df * kc.ln_det() + 0.5 * nf * oc.ln_det() + 0.5 * oiq.trace();
    if !with_grad {
        return Ok((value, None));
    }

    let mut grad = Vec::with_capacity(params.len());
    // ∂L/∂K′ = ½(d K′⁻¹ − α_K Ω⁻¹ α_Kᵀ)
    let a_oi = &alpha_k * &omega_inv;
    let dk = (kc.inverse() * df - a_oi * alpha_k.transpose()) * 0.5;
    grad.extend(params.kernel.gram_grad_contract(x, &dk)?);
    // ∂L/∂Ω = ½(n Ω⁻¹ − Ω⁻¹ YᵀK′⁻¹Y Ω⁻¹)
    let g_omega = symmetrize((&omega_inv * nf - oiq * &omega_inv) * 0.5);
    grad.extend(params.rowcov.chain_omega_gradient(&g_omega, &phi));
    Ok((value, Some(grad)))
}

pub fn nlml(params: &HyperParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    Ok(eval(params, x, y, false)?.0)
}

/// Gradient of [`nlml`] with respect to every coordinate of the flat
/// hyperparameter vector (see [`HyperParams::to_vec`]).
pub fn nlml_grad(params: &HyperParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(eval(params, x, y, true)?.1.expect("gradient requested"))
}

pub fn nlml_and_grad(params: &HyperParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let (v, g) = eval(params, x, y, true)?;
    Ok((v, g.expect("gradient requested")))
}

pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, spec: &KernelSpec, opts: &FitOptions) -> Result<TrainedModel> {
    model::fit(Family::Gp, x, y, spec, opts)
}

pub fn predict(model: &TrainedModel, xstar: &DMatrix<f64>) -> Result<Prediction> {
    if model.family() != Family::Gp {
        return Err(Error::InvalidParameter(
            "mvgp::predict called on a Student-t model".into(),
        ));
    }
    model.predict(xstar)
}
