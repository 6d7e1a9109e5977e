//! Normalization, fold construction, error metrics, the four-model
//! comparison harness, and the synthetic two-output benchmark.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::select_rows;
use crate::matvar::{MatrixNormal, MatrixT};
use crate::model::{fit, Family, IndependentModels};
use crate::optimizer::FitOptions;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        input_names: Vec<String>,
        output_names: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Dimension(format!(
                "{} input rows but {} output rows",
                x.nrows(),
                y.nrows()
            )));
        }
        if input_names.len() != x.ncols() || output_names.len() != y.ncols() {
            return Err(Error::Dimension(format!(
                "{} input names for {} inputs, {} output names for {} outputs",
                input_names.len(),
                x.ncols(),
                output_names.len(),
                y.ncols()
            )));
        }
        Ok(Self {
            x,
            y,
            input_names,
            output_names,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: select_rows(&self.x, rows),
            y: select_rows(&self.y, rows),
            input_names: self.input_names.clone(),
            output_names: self.output_names.clone(),
        }
    }
}

/// Per-column sample mean and standard deviation (`n − 1` denominator).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationState {
    pub mu: DVector<f64>,
    pub sigma: DVector<f64>,
}

impl NormalizationState {
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| (y[(i, j)] - self.mu[j]) / self.sigma[j])
    }
}

/// Standardizes every column. `names` (if given) label the column in the
/// error for a constant column.
pub fn normalize_named(y: &DMatrix<f64>, names: Option<&[String]>) -> Result<(DMatrix<f64>, NormalizationState)> {
    let n = y.nrows();
    if n < 2 {
        return Err(Error::Data("normalization needs at least two rows".into()));
    }
    let mut mu = DVector::zeros(y.ncols());
    let mut sigma = DVector::zeros(y.ncols());
    for (j, col) in y.column_iter().enumerate() {
        let label = names
            .and_then(|ns| ns.get(j))
            .map_or_else(|| format!("column {j}"), |s| format!("column '{s}'"));
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{label} contains non-finite values")));
        }
        let m = col.mean();
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        if col.iter().all(|v| *v == col[0]) || var <= 0.0 {
            return Err(Error::Data(format!("{label} is constant and cannot be normalized")));
        }
        mu[j] = m;
        sigma[j] = var.sqrt();
    }
    let state = NormalizationState { mu, sigma };
    Ok((state.apply(y), state))
}

pub fn normalize(y: &DMatrix<f64>) -> Result<(DMatrix<f64>, NormalizationState)> {
    normalize_named(y, None)
}

pub fn denormalize(z: &DMatrix<f64>, state: &NormalizationState) -> DMatrix<f64> {
    DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * state.sigma[j] + state.mu[j])
}

/// `k` equal contiguous blocks covering `0..n` in order.
pub fn kfold_blocks(n: usize, k: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if k < 2 || k > n {
        return Err(Error::Config(format!("fold count {k} must lie in 2..={n}")));
    }
    if n % k != 0 {
        return Err(Error::Config(format!("fold count {k} does not divide {n} rows")));
    }
    let b = n / k;
    Ok((0..k).map(|i| i * b..(i + 1) * b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mse: Vec<f64>,
    pub mae: Vec<f64>,
    pub rmse: Vec<f64>,
}

pub fn metrics(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Metrics> {
    if pred.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "prediction is {:?}, truth is {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Data("no points to score".into()));
    }
    let n = pred.nrows() as f64;
    let diff = pred - truth;
    let mse: Vec<f64> = diff.column_iter().map(|c| c.norm_squared() / n).collect();
    let mae = diff.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n).collect();
    let rmse = mse.iter().map(|v| v.sqrt()).collect();
    Ok(Metrics { mse, mae, rmse })
}

/// Mean of per-repetition RMSEs.
pub fn armse(rmses: &[f64]) -> Result<f64> {
    if rmses.is_empty() {
        return Err(Error::Data("ARMSE needs at least one repetition".into()));
    }
    Ok(rmses.iter().sum::<f64>() / rmses.len() as f64)
}

/// Lower median: element `(n−1)/2` of the sorted values.
pub fn lower_median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

/// Largest of the per-output medians.
pub fn mmo(per_output_medians: &[f64]) -> Result<f64> {
    per_output_medians
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::Data("MMO of zero outputs".into()))
}

/// The four regressors compared throughout: joint models and their
/// per-output counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    MvGp,
    Gp,
    MvTp,
    Tp,
}

impl ModelKind {
    /// Report column order.
    pub const ALL: [ModelKind; 4] = [ModelKind::MvGp, ModelKind::Gp, ModelKind::MvTp, ModelKind::Tp];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::MvGp => "MV-GP",
            ModelKind::Gp => "GP",
            ModelKind::MvTp => "MV-TP",
            ModelKind::Tp => "TP",
        }
    }

    pub fn family(self) -> Family {
        match self {
            ModelKind::MvGp | ModelKind::Gp => Family::Gp,
            ModelKind::MvTp | ModelKind::Tp => Family::Tp,
        }
    }

    pub fn is_joint(self) -> bool {
        matches!(self, ModelKind::MvGp | ModelKind::MvTp)
    }

    /// Fits on `(x, y)` and returns the predictive mean and pointwise
    /// variance at `xstar`.
    pub fn fit_predict(
        self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        xstar: &DMatrix<f64>,
        spec: &KernelSpec,
        opts: &FitOptions,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if self.is_joint() {
            let p = fit(self.family(), x, y, spec, opts)?.predict(xstar)?;
            let var = p.pointwise_variance();
            Ok((p.mean, var))
        } else {
            IndependentModels::fit(self.family(), x, y, spec, opts)?.predict(xstar)
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::MvGp => "mvgp",
            ModelKind::Gp => "gp",
            ModelKind::MvTp => "mvtp",
            ModelKind::Tp => "tp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "mvgp" => Ok(ModelKind::MvGp),
            "gp" => Ok(ModelKind::Gp),
            "mvtp" => Ok(ModelKind::MvTp),
            "tp" => Ok(ModelKind::Tp),
            other => Err(Error::Config(format!("unknown model '{other}' (mvgp, mvtp, gp, tp)"))),
        }
    }
}

/// Stream-splitting seed derivation (SplitMix64 finalizer over the pair).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x6a09_e667_f3bc_c909);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Cross-validation

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub output_names: Vec<String>,
    pub models: Vec<ModelKind>,
    /// `[model][fold]` metrics on the normalized scale.
    pub folds: Vec<Vec<Metrics>>,
}

impl CrossValReport {
    fn medians(&self, m: usize, pick: fn(&Metrics) -> &Vec<f64>) -> Result<Vec<f64>> {
        (0..self.output_names.len())
            .map(|j| lower_median(&self.folds[m].iter().map(|f| pick(f)[j]).collect::<Vec<_>>()))
            .collect()
    }

    pub fn mse_medians(&self, model: usize) -> Result<Vec<f64>> {
        self.medians(model, |f| &f.mse)
    }

    pub fn mae_medians(&self, model: usize) -> Result<Vec<f64>> {
        self.medians(model, |f| &f.mae)
    }

    /// Table with one row per output plus a final MMO row, one column per
    /// model: `(row labels, values[row][model])`.
    pub fn table(&self, mae: bool) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let d = self.output_names.len();
        let mut rows = vec![vec![0.0; self.models.len()]; d + 1];
        for m in 0..self.models.len() {
            let med = if mae { self.mae_medians(m)? } else { self.mse_medians(m)? };
            for (j, v) in med.iter().enumerate() {
                rows[j][m] = *v;
            }
            rows[d][m] = mmo(&med)?;
        }
        let mut labels = self.output_names.clone();
        labels.push("MMO".into());
        Ok((labels, rows))
    }
}

/// Blocked k-fold comparison. Inputs and outputs are standardized with
/// statistics from the full dataset before splitting; errors are reported on
/// that standardized scale.
pub fn cross_validate(
    data: &Dataset,
    k: usize,
    models: &[ModelKind],
    spec: &KernelSpec,
    opts: &FitOptions,
) -> Result<CrossValReport> {
    let blocks = kfold_blocks(data.len(), k)?;
    let (x, _) = normalize_named(&data.x, Some(&data.input_names))?;
    let (y, _) = normalize_named(&data.y, Some(&data.output_names))?;
    let n = data.len();
    let jobs: Vec<(usize, usize)> = (0..models.len()).flat_map(|m| (0..k).map(move |f| (m, f))).collect();
    let results: Vec<Metrics> = jobs
        .par_iter()
        .map(|&(m, f)| {
            let test: Vec<usize> = blocks[f].clone().collect();
            let train: Vec<usize> = (0..n).filter(|i| !blocks[f].contains(i)).collect();
            let fold_opts = FitOptions {
                seed: derive_seed(opts.seed, f as u64),
                ..opts.clone()
            };
            let xt = select_rows(&x, &test);
            let (mean, _) = models[m]
                .fit_predict(&select_rows(&x, &train), &select_rows(&y, &train), &xt, spec, &fold_opts)
                .map_err(|e| annotate(e, &format!("{} fold {}", models[m].label(), f + 1)))?;
            metrics(&mean, &select_rows(&y, &test))
        })
        .collect::<Result<_>>()?;
    let mut it = results.into_iter();
    let folds = (0..models.len()).map(|_| it.by_ref().take(k).collect()).collect();
    Ok(CrossValReport {
        output_names: data.output_names.clone(),
        models: models.to_vec(),
        folds,
    })
}

fn annotate(e: Error, ctx: &str) -> Error {
    match e {
        Error::NotPositiveDefinite { what } => Error::NotPositiveDefinite {
            what: format!("{what} ({ctx})"),
        },
        Error::Fit(m) => Error::Fit(format!("{ctx}: {m}")),
        Error::Optimization(m) => Error::Optimization(format!("{ctx}: {m}")),
        Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Synthetic two-output benchmark

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Mgp,
    Mtp,
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseFamily::Mgp => "mgp",
            NoiseFamily::Mtp => "mtp",
        })
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mgp" | "gaussian" => Ok(NoiseFamily::Mgp),
            "mtp" | "student" | "student-t" => Ok(NoiseFamily::Mtp),
            other => Err(Error::Config(format!("unknown noise family '{other}' (mgp, mtp)"))),
        }
    }
}

/// Settings of the synthetic benchmark noise process. Kernel values are logs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub noise_log_lengthscale: f64,
    pub noise_log_signal_variance: f64,
    pub omega: DMatrix<f64>,
    pub nu: f64,
    pub n_points: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            // ℓ = ln 1.001 and s_f² = ln 5 taken as plain values
            noise_log_lengthscale: 1.001f64.ln().ln(),
            noise_log_signal_variance: 5f64.ln().ln(),
            omega: DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]),
            nu: 3.0,
            n_points: 100,
        }
    }
}

pub fn simulation_truth(x: f64) -> [f64; 2] {
    [
        2.0 * x * x.cos(),
        1.5 * x * (x + std::f64::consts::PI / 5.0).cos(),
    ]
}

/// 0-based training rows: 1-based positions `3r+1` for r = 1..=12 and
/// `3r+2` for r = 22..=32.
pub fn simulation_training_indices() -> Vec<usize> {
    (1..=12).map(|r| 3 * r).chain((22..=32).map(|r| 3 * r + 1)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub data: Dataset,
    /// Noise-free targets at every input.
    pub truth: DMatrix<f64>,
    pub train: Vec<usize>,
}

pub fn simulate_dataset(noise: NoiseFamily, seed: u64) -> Result<SimulatedData> {
    simulate_with(noise, seed, &SimulationSettings::default())
}

pub fn simulate_with(noise: NoiseFamily, seed: u64, s: &SimulationSettings) -> Result<SimulatedData> {
    let n = s.n_points;
    if n < 2 {
        return Err(Error::Config("simulation needs at least two points".into()));
    }
    let xs: Vec<f64> = (0..n).map(|i| -10.0 + 20.0 * i as f64 / (n - 1) as f64).collect();
    let x = DMatrix::from_column_slice(n, 1, &xs);
    let truth = DMatrix::from_fn(n, 2, |i, j| simulation_truth(xs[i])[j]);
    let kernel = KernelSpec::se(s.noise_log_lengthscale, s.noise_log_signal_variance, f64::NEG_INFINITY);
    let k = kernel.gram(&x, &x)?;
    let law = MatrixNormal::zero_mean(k, s.omega.clone())?;
    let eps = match noise {
        NoiseFamily::Mgp => law.sample(seed),
        NoiseFamily::Mtp => MatrixT::from_normal(s.nu, law)?.sample(seed),
    };
    let train: Vec<usize> = simulation_training_indices().into_iter().filter(|&i| i < n).collect();
    let data = Dataset::new(x, &truth + eps, vec!["x".into()], vec!["y1".into(), "y2".into()])?;
    Ok(SimulatedData { data, truth, train })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub noise: NoiseFamily,
    pub models: Vec<ModelKind>,
    /// `[repetition][model][output]` RMSE against the noise-free truth.
    pub rmse: Vec<Vec<Vec<f64>>>,
}

impl SimulationReport {
    /// `[model][output]` ARMSE.
    pub fn armse(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.rmse.first().map_or(0, |r| r[0].len());
        (0..self.models.len())
            .map(|m| {
                (0..d)
                    .map(|j| armse(&self.rmse.iter().map(|r| r[m][j]).collect::<Vec<_>>()))
                    .collect()
            })
            .collect()
    }
}

/// Repeats the benchmark `reps` times: fresh noise per repetition, every
/// model fitted on the training rows and scored on all points.
pub fn simulation_study(
    noise: NoiseFamily,
    reps: usize,
    models: &[ModelKind],
    spec: &KernelSpec,
    opts: &FitOptions,
    settings: &SimulationSettings,
) -> Result<SimulationReport> {
    if reps == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let rmse = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_with(noise, derive_seed(opts.seed, r), settings)?;
            let train = sim.data.subset(&sim.train);
            models
                .iter()
                .enumerate()
                .map(|(m, kind)| {
                    let o = FitOptions {
                        seed: derive_seed(derive_seed(opts.seed, r), 1 + m as u64),
                        ..opts.clone()
                    };
                    let (mean, _) = kind
                        .fit_predict(&train.x, &train.y, &sim.data.x, spec, &o)
                        .map_err(|e| annotate(e, &format!("{} repetition {}", kind.label(), r + 1)))?;
                    Ok(metrics(&mean, &sim.truth)?.rmse)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationReport {
        noise,
        models: models.to_vec(),
        rmse,
    })
}
