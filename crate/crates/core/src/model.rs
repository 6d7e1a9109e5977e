//! Fitted models, predictions, and the shared fitting routine for both
//! process families.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{select_columns, symmetrize, CholeskyFactor};
use crate::optimizer::{minimize_fused, multi_restart, FitOptions, InitPrior, RestartOutcome};
use crate::params::{HyperParams, RowCovParams};
use crate::{mvgp, mvtp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gp,
    Tp,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gp => "gp",
            Family::Tp => "tp",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gp" => Ok(Family::Gp),
            "tp" => Ok(Family::Tp),
            other => Err(Error::Config(format!("unknown model family '{other}'"))),
        }
    }
}

/// NLML and its gradient for the given family.
pub fn objective(
    family: Family,
    params: &HyperParams,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<(f64, Vec<f64>)> {
    match family {
        Family::Gp => mvgp::nlml_and_grad(params, x, y),
        Family::Tp => mvtp::nlml_and_grad(params, x, y),
    }
}

pub fn nlml(family: Family, params: &HyperParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    match family {
        Family::Gp => mvgp::nlml(params, x, y),
        Family::Tp => mvtp::nlml(params, x, y),
    }
}

/// Predictive law `MN(M̂, Σ̂, Ω̂)` (Gaussian) or `MT(ν̂, M̂, Σ̂, Ω̂)` (Student-t).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DMatrix<f64>,
    pub col_cov: DMatrix<f64>,
    pub row_cov: DMatrix<f64>,
    /// `ν̂ = ν + n` for Student-t predictions.
    pub df: Option<f64>,
}

impl Prediction {
    /// Marginal variance of each predicted entry: `Σ̂ᵢᵢ Ω̂ⱼⱼ`, divided by
    /// `ν̂ − 2` for Student-t predictions.
    pub fn pointwise_variance(&self) -> DMatrix<f64> {
        let scale = self.df.map_or(1.0, |df| 1.0 / (df - 2.0));
        let (m, d) = self.mean.shape();
        DMatrix::from_fn(m, d, |i, j| {
            (self.col_cov[(i, i)] * self.row_cov[(j, j)] * scale).max(0.0)
        })
    }

    pub fn pointwise_std(&self) -> DMatrix<f64> {
        self.pointwise_variance().map(f64::sqrt)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    family: Family,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    params: HyperParams,
    nlml: f64,
    converged: bool,
    chol: CholeskyFactor,
    alpha: DMatrix<f64>,
}

impl TrainedModel {
    /// Builds a model at fixed hyperparameters, factorizing `K′(X, X)`.
    pub fn new(
        family: Family,
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        params: HyperParams,
        nlml: f64,
        converged: bool,
    ) -> Result<Self> {
        mvgp::check_data(&params, &x, &y)?;
        match (family, params.lognu_minus2) {
            (Family::Tp, None) => {
                return Err(Error::InvalidParameter(
                    "Student-t model needs degrees of freedom".into(),
                ))
            }
            (Family::Gp, Some(_)) => {
                return Err(Error::InvalidParameter(
                    "Gaussian model cannot carry degrees of freedom".into(),
                ))
            }
            _ => {}
        }
        let kp = params.kernel.gram_noisy(&x)?;
        let chol = CholeskyFactor::new(&kp, "K′")?;
        let alpha = chol.solve(&y);
        Ok(Self {
            family,
            x,
            y,
            params,
            nlml,
            converged,
            chol,
            alpha,
        })
    }

    /// Model at fixed hyperparameters with the NLML evaluated there.
    pub fn at_params(family: Family, x: DMatrix<f64>, y: DMatrix<f64>, params: HyperParams) -> Result<Self> {
        let value = nlml(family, &params, &x, &y)?;
        Self::new(family, x, y, params, value, false)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.params.kernel
    }

    pub fn rowcov(&self) -> &RowCovParams {
        &self.params.rowcov
    }

    pub fn nu(&self) -> Option<f64> {
        self.params.nu()
    }

    pub fn nlml(&self) -> f64 {
        self.nlml
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn cholesky(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn predict(&self, xstar: &DMatrix<f64>) -> Result<Prediction> {
        if xstar.ncols() != self.x.ncols() {
            return Err(Error::Dimension(format!(
                "test inputs have {} columns, model was trained on {}",
                xstar.ncols(),
                self.x.ncols()
            )));
        }
        let kernel = &self.params.kernel;
        // K′(X*, X) as an m×n block: cross terms carry no noise
        let cross = kernel.gram(xstar, &self.x)?;
        let mean = &cross * &self.alpha;
        let v = self.chol.solve_lower(&cross.transpose());
        let col_cov = symmetrize(kernel.gram_noisy(xstar)? - v.transpose() * v);
        let omega = self.params.rowcov.omega();
        let (row_cov, df) = match self.family {
            Family::Gp => (omega, None),
            Family::Tp => {
                let inflation = symmetrize(self.y.transpose() * &self.alpha);
                let nu = self.params.nu().expect("checked at construction");
                (omega + inflation, Some(nu + self.x.nrows() as f64))
            }
        };
        Ok(Prediction {
            mean,
            col_cov,
            row_cov,
            df,
        })
    }
}

fn validate_training(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "{} input rows but {} output rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::Data("fitting needs at least two observations".into()));
    }
    if y.ncols() == 0 {
        return Err(Error::Data("no outputs".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("training data contains non-finite values".into()));
    }
    Ok(())
}

/// Maximum-likelihood fit with random restarts.
///
/// Every free coordinate of the flat parameter vector is drawn from the
/// initial prior; `ln φ₁₁` stays at zero. The best restart (see
/// [`multi_restart`]) becomes the model.
pub fn fit(
    family: Family,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    spec: &KernelSpec,
    opts: &FitOptions,
) -> Result<TrainedModel> {
    validate_training(x, y)?;
    opts.validate()?;
    let kernel = KernelSpec::unit(spec.family, x.ncols());
    let template = HyperParams::new(
        kernel,
        RowCovParams::identity(y.ncols()),
        (family == Family::Tp).then_some(0.0),
    );
    let anchor = template.scale_anchor_index();
    let free: Vec<usize> = (0..template.len()).filter(|&i| i != anchor).collect();
    let minimize_opts = opts.minimize_options();

    let fit_one = |seed: u64| -> Result<RestartOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut full = template.to_vec();
        for &i in &free {
            full[i] = match opts.init_prior {
                InitPrior::Uniform01 => rng.random::<f64>(),
            };
        }
        let x0: Vec<f64> = free.iter().map(|&i| full[i]).collect();
        let mut work = template.clone();
        let mut buf = full.clone();
        let func = |z: &[f64]| -> (f64, Vec<f64>) {
            for (&i, &v) in free.iter().zip(z) {
                buf[i] = v;
            }
            if work.set_from_slice(&buf).is_err() {
                return (f64::INFINITY, vec![f64::NAN; z.len()]);
            }
            match objective(family, &work, x, y) {
                Ok((v, g)) if v.is_finite() => (v, free.iter().map(|&i| g[i]).collect()),
                _ => (f64::INFINITY, vec![f64::NAN; z.len()]),
            }
        };
        let m = minimize_fused(func, &x0, &minimize_opts)?;
        for (&i, &v) in free.iter().zip(&m.x) {
            full[i] = v;
        }
        Ok(RestartOutcome {
            params: full,
            value: m.value,
            converged: m.converged(),
        })
    };

    let best = multi_restart(fit_one, opts)?;
    let params = template.with_values(&best.outcome.params)?;
    TrainedModel::new(
        family,
        x.clone(),
        y.clone(),
        params,
        best.outcome.value,
        best.outcome.converged,
    )
}

/// One single-output model per column of `Y`: the independent GPR/TPR
/// baselines, obtained as `d = 1` instances of the multivariate models.
#[derive(Debug, Clone)]
pub struct IndependentModels {
    models: Vec<TrainedModel>,
}

impl IndependentModels {
    pub fn fit(
        family: Family,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        spec: &KernelSpec,
        opts: &FitOptions,
    ) -> Result<Self> {
        let models = (0..y.ncols())
            .map(|j| fit(family, x, &select_columns(y, &[j]), spec, opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models })
    }

    pub fn models(&self) -> &[TrainedModel] {
        &self.models
    }

    /// Predictive means (m×d) and pointwise variances (m×d).
    pub fn predict(&self, xstar: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.models.len();
        let mut mean = DMatrix::zeros(xstar.nrows(), d);
        let mut var = DMatrix::zeros(xstar.nrows(), d);
        for (j, m) in self.models.iter().enumerate() {
            let p = m.predict(xstar)?;
            mean.set_column(j, &p.mean.column(0));
            var.set_column(j, &p.pointwise_variance().column(0));
        }
        Ok((mean, var))
    }
}
