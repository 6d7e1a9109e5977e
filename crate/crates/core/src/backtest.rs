//! Daily trading harness: returns, the buy/sell signal, the cash/shares
//! state machine with proportional fees, and the rolling-window driver that
//! turns regression forecasts into strategy ledgers.

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{derive_seed, ModelKind};
use crate::kernels::KernelSpec;
use crate::linalg::select_rows;
use crate::optimizer::FitOptions;

pub const DEFAULT_FEE: f64 = 0.00025;
pub const DEFAULT_INITIAL: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub name: String,
    pub dates: Vec<String>,
    pub open: Vec<f64>,
    pub close: Vec<f64>,
    pub adj_close: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        name: impl Into<String>,
        dates: Vec<String>,
        open: Vec<f64>,
        close: Vec<f64>,
        adj_close: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        let n = dates.len();
        if open.len() != n || close.len() != n || adj_close.len() != n {
            return Err(Error::Data(format!("{name}: price columns have different lengths")));
        }
        if let Some(i) = (1..n).find(|&i| dates[i] <= dates[i - 1]) {
            return Err(Error::Data(format!(
                "{name}: dates not strictly increasing at row {} ({} after {})",
                i + 1,
                dates[i],
                dates[i - 1]
            )));
        }
        for (col, v) in [("open", &open), ("close", &close), ("adj_close", &adj_close)] {
            if let Some(i) = v.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
                return Err(Error::Data(format!("{name}: non-positive {col} price {} at row {}", v[i], i + 1)));
            }
        }
        Ok(Self {
            name,
            dates,
            open,
            close,
            adj_close,
        })
    }

    /// Reads a `date,open,close,adj_close` CSV (extra columns ignored).
    pub fn from_csv(path: &Path, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("{name}: cannot read {}: {e}", path.display())))?;
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let headers: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
        let col = |key: &str| {
            headers.iter().position(|h| h == key).ok_or_else(|| {
                Error::Data(format!("{name}: column '{key}' missing (need date,open,close,adj_close)"))
            })
        };
        let (cd, co, cc, ca) = (col("date")?, col("open")?, col("close")?, col("adj_close")?);
        let (mut dates, mut open, mut close, mut adj) = (vec![], vec![], vec![], vec![]);
        for (r, rec) in rd.records().enumerate() {
            let rec = rec?;
            let num = |c: usize, label: &str| -> Result<f64> {
                let raw = rec.get(c).unwrap_or("").trim();
                raw.parse().map_err(|_| {
                    Error::Data(format!("{name}: line {}, column '{label}': cannot read '{raw}'", r + 2))
                })
            };
            dates.push(rec.get(cd).unwrap_or("").trim().to_string());
            open.push(num(co, "open")?);
            close.push(num(cc, "close")?);
            adj.push(num(ca, "adj_close")?);
        }
        Self::new(name, dates, open, close, adj)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Days `range` as a new series.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PriceSeries {
        PriceSeries {
            name: self.name.clone(),
            dates: self.dates[range.clone()].to_vec(),
            open: self.open[range.clone()].to_vec(),
            close: self.close[range.clone()].to_vec(),
            adj_close: self.adj_close[range].to_vec(),
        }
    }

    /// Opening price on the adjusted scale: `OP·ACP/CP`.
    pub fn adjusted_open(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.open[i] * self.adj_close[i] / self.close[i])
            .collect()
    }
}

/// `ln(ACPᵢ/ACPᵢ₋₁)`, one per day after the first.
pub fn log_returns(s: &PriceSeries) -> Result<Vec<f64>> {
    if s.len() < 2 {
        return Err(Error::Data(format!("{}: need at least two prices for returns", s.name)));
    }
    Ok(s.adj_close.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// `ln(CPᵢ/OPᵢ)`, one per day.
pub fn interday_log_returns(s: &PriceSeries) -> Vec<f64> {
    s.close.iter().zip(&s.open).map(|(c, o)| (c / o).ln()).collect()
}

/// `L̂R − LR + ILR`, which equals `ln(predicted ACP / AOP)`.
pub fn bs_signal(lr_hat: &[f64], lr: &[f64], ilr: &[f64]) -> Result<Vec<f64>> {
    if lr_hat.len() != lr.len() || lr.len() != ilr.len() {
        return Err(Error::Dimension(format!(
            "signal inputs have lengths {}, {}, {}",
            lr_hat.len(),
            lr.len(),
            ilr.len()
        )));
    }
    Ok((0..lr.len()).map(|i| lr_hat[i] - lr[i] + ilr[i]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Buy,
    Sell,
    Keep,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Buy => "Buy",
            Action::Sell => "Sell",
            Action::Keep => "Keep",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Cash,
    Shares,
}

/// One trading day. `position` is the holding after the day's action and
/// `value` is marked at that day's adjusted close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRecord {
    pub action: Action,
    pub position: Position,
    pub value: f64,
    pub fee_paid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyLedger {
    pub initial: f64,
    pub records: Vec<LedgerRecord>,
}

impl StrategyLedger {
    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    pub fn final_value(&self) -> f64 {
        self.records.last().map_or(self.initial, |r| r.value)
    }
}

/// Runs the cash/shares state machine over `lr_hat.len()` days.
///
/// `s` holds those days preceded by one reference day (so `s.len() =
/// lr_hat.len() + 1`); day `i` of the strategy is row `i + 1` of `s`.
/// Trades execute at the adjusted open, each conversion costing `fee_rate`
/// of the converted value; shares are marked at the adjusted close.
pub fn run_strategy(
    lr_hat: &[f64],
    bs: &[f64],
    s: &PriceSeries,
    fee_rate: f64,
    initial: f64,
) -> Result<StrategyLedger> {
    let m = lr_hat.len();
    if bs.len() != m || s.len() != m + 1 {
        return Err(Error::Dimension(format!(
            "{}: {} forecasts, {} signals, {} price rows (expected forecasts + 1)",
            s.name,
            m,
            bs.len(),
            s.len()
        )));
    }
    if !(initial > 0.0) || !(0.0..1.0).contains(&fee_rate) {
        return Err(Error::Config(format!("initial {initial} must be positive and fee {fee_rate} in [0, 1)")));
    }
    let aop = s.adjusted_open();
    let acp = &s.adj_close;
    let mut value = initial;
    let mut position = Position::Cash;
    let mut records = Vec::with_capacity(m);
    for i in 0..m {
        let t = i + 1;
        let (action, fee_paid) = match position {
            Position::Cash if lr_hat[i] > 0.0 && bs[i] > 0.0 => {
                let fee = value * fee_rate;
                value = (value - fee) * acp[t] / aop[t];
                position = Position::Shares;
                (Action::Buy, fee)
            }
            Position::Shares if lr_hat[i] < 0.0 && bs[i] < 0.0 => {
                let gross = value * aop[t] / acp[t - 1];
                let fee = gross * fee_rate;
                value = gross - fee;
                position = Position::Cash;
                (Action::Sell, fee)
            }
            Position::Shares => {
                value *= acp[t] / acp[t - 1];
                (Action::Keep, 0.0)
            }
            Position::Cash => (Action::Keep, 0.0),
        };
        records.push(LedgerRecord {
            action,
            position,
            value,
            fee_paid,
        });
    }
    Ok(StrategyLedger { initial, records })
}

/// Value of `initial` held from the close of row 0: `initial·ACPᵢ/ACP₀` for
/// rows 1.. of `s`.
pub fn buy_and_hold(s: &PriceSeries, initial: f64) -> Vec<f64> {
    let base = s.adj_close[0];
    s.adj_close[1..].iter().map(|p| initial * p / base).collect()
}

/// Equal-weight average of value trajectories of equal length.
pub fn equal_weight(trajectories: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = trajectories.first().ok_or_else(|| Error::Data("empty portfolio".into()))?;
    if trajectories.iter().any(|t| t.len() != first.len()) {
        return Err(Error::Dimension("portfolio trajectories differ in length".into()));
    }
    let k = trajectories.len() as f64;
    Ok((0..first.len()).map(|i| trajectories.iter().map(|t| t[i]).sum::<f64>() / k).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPlan {
    pub train_len: usize,
    pub horizon: usize,
    pub n_windows: usize,
}

impl Default for WindowPlan {
    fn default() -> Self {
        Self {
            train_len: 303,
            horizon: 10,
            n_windows: 20,
        }
    }
}

impl WindowPlan {
    pub fn n_predictions(&self) -> usize {
        self.horizon * self.n_windows
    }

    fn validate(&self, n_returns: usize) -> Result<()> {
        if self.train_len < 2 || self.horizon == 0 || self.n_windows == 0 {
            return Err(Error::Config(format!("degenerate window plan {self:?}")));
        }
        let need = self.train_len + self.n_predictions();
        if need > n_returns {
            return Err(Error::Data(format!(
                "window plan needs {need} returns ({} prices) but the series have {n_returns}",
                need + 1
            )));
        }
        Ok(())
    }
}

/// One window's regression problem; rows are days, inputs are index
/// returns, targets are stock returns.
pub struct WindowData<'a> {
    pub index: usize,
    pub x_train: &'a DMatrix<f64>,
    pub y_train: &'a DMatrix<f64>,
    pub x_test: &'a DMatrix<f64>,
    /// Realized targets of the test days, for oracle predictors in tests.
    pub y_test: &'a DMatrix<f64>,
}

/// Produces return forecasts for one window.
pub trait ReturnPredictor: Sync {
    fn label(&self) -> String;
    fn predict(&self, w: &WindowData<'_>) -> Result<DMatrix<f64>>;
}

/// Fits one of the four regressors afresh in every window.
#[derive(Debug, Clone)]
pub struct ModelPredictor {
    pub kind: ModelKind,
    pub spec: KernelSpec,
    pub opts: FitOptions,
}

impl ReturnPredictor for ModelPredictor {
    fn label(&self) -> String {
        self.kind.label().to_string()
    }

    fn predict(&self, w: &WindowData<'_>) -> Result<DMatrix<f64>> {
        let opts = FitOptions {
            seed: derive_seed(self.opts.seed, w.index as u64),
            ..self.opts.clone()
        };
        self.kind
            .fit_predict(w.x_train, w.y_train, w.x_test, &self.spec, &opts)
            .map(|(mean, _)| mean)
            .map_err(|e| Error::Fit(format!("{} window {}: {e}", self.kind.label(), w.index + 1)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub label: String,
    /// `[stock]` predicted log returns over the prediction days.
    pub forecasts: Vec<Vec<f64>>,
    pub ledgers: Vec<StrategyLedger>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub plan: WindowPlan,
    pub stock_names: Vec<String>,
    pub index_names: Vec<String>,
    /// Dates of the prediction days.
    pub dates: Vec<String>,
    pub runs: Vec<StrategyRun>,
    /// Buy&Hold trajectories, stocks first, then indices.
    pub buy_and_hold: Vec<(String, Vec<f64>)>,
    pub initial: f64,
}

impl BacktestResult {
    /// Value after each period, led by the initial value; one row per
    /// period boundary and one column per strategy run then per Buy&Hold
    /// series, for `stock`.
    pub fn period_table(&self, stock: usize) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut header: Vec<String> = self.runs.iter().map(|r| r.label.clone()).collect();
        header.push(self.stock_names[stock].clone());
        header.extend(self.index_names.iter().cloned());
        let mut cols: Vec<Vec<f64>> = self.runs.iter().map(|r| r.ledgers[stock].values()).collect();
        cols.push(self.buy_and_hold[stock].1.clone());
        let ns = self.stock_names.len();
        cols.extend(self.buy_and_hold[ns..].iter().map(|(_, v)| v.clone()));
        let mut rows = vec![vec![self.initial; cols.len()]];
        for p in 1..=self.plan.n_windows {
            let day = p * self.plan.horizon - 1;
            rows.push(cols.iter().map(|c| c[day]).collect());
        }
        (header, rows)
    }
}

fn check_aligned(all: &[&PriceSeries]) -> Result<()> {
    let first = all[0];
    for s in &all[1..] {
        if s.dates != first.dates {
            let at = s.dates.iter().zip(&first.dates).position(|(a, b)| a != b);
            return Err(Error::Data(match at {
                Some(i) => format!(
                    "series '{}' is not aligned with '{}': row {} has date {} vs {}",
                    s.name,
                    first.name,
                    i + 1,
                    s.dates[i],
                    first.dates[i]
                ),
                None => format!(
                    "series '{}' has {} rows, '{}' has {}",
                    s.name,
                    s.len(),
                    first.name,
                    first.len()
                ),
            }));
        }
    }
    Ok(())
}

/// Rolling-window backtest over the most recent `train_len + horizon·n_windows`
/// returns. Every window fits on `train_len` days and forecasts the next
/// `horizon`; inputs are the same-day index returns.
pub fn sliding_window_backtest(
    stocks: &[PriceSeries],
    indices: &[PriceSeries],
    plan: WindowPlan,
    predictors: &[&dyn ReturnPredictor],
    fee: f64,
    initial: f64,
) -> Result<BacktestResult> {
    if stocks.is_empty() || indices.is_empty() {
        return Err(Error::Config("need at least one stock and one index".into()));
    }
    let all: Vec<&PriceSeries> = stocks.iter().chain(indices).collect();
    check_aligned(&all)?;
    let n_prices = stocks[0].len();
    if n_prices < 2 {
        return Err(Error::Data("price series too short".into()));
    }
    plan.validate(n_prices - 1)?;

    let lr_of = |s: &[PriceSeries]| -> Result<DMatrix<f64>> {
        let cols = s.iter().map(log_returns).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(n_prices - 1, s.len(), |i, j| cols[j][i]))
    };
    let x = lr_of(indices)?;
    let y = lr_of(stocks)?;
    let offset = (n_prices - 1) - plan.train_len - plan.n_predictions();
    let first_pred = offset + plan.train_len;

    let runs = predictors
        .iter()
        .map(|pred| -> Result<StrategyRun> {
            let blocks = (0..plan.n_windows)
                .into_par_iter()
                .map(|w| {
                    let start = offset + w * plan.horizon;
                    let train: Vec<usize> = (start..start + plan.train_len).collect();
                    let test: Vec<usize> = (start + plan.train_len..start + plan.train_len + plan.horizon).collect();
                    let (xt, yt) = (select_rows(&x, &train), select_rows(&y, &train));
                    let (xs, ys) = (select_rows(&x, &test), select_rows(&y, &test));
                    let data = WindowData {
                        index: w,
                        x_train: &xt,
                        y_train: &yt,
                        x_test: &xs,
                        y_test: &ys,
                    };
                    let out = pred.predict(&data)?;
                    if out.shape() != (plan.horizon, stocks.len()) {
                        return Err(Error::Dimension(format!(
                            "{} window {}: forecast shape {:?}",
                            pred.label(),
                            w + 1,
                            out.shape()
                        )));
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut forecasts = vec![Vec::with_capacity(plan.n_predictions()); stocks.len()];
            for b in &blocks {
                for (j, f) in forecasts.iter_mut().enumerate() {
                    f.extend(b.column(j).iter());
                }
            }
            let ledgers = stocks
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    // return index r covers price rows r..=r+1
                    let window = s.slice(first_pred..n_prices);
                    let lr = log_returns(&window)?;
                    let ilr = &interday_log_returns(&window)[1..];
                    let bs = bs_signal(&forecasts[j], &lr, ilr)?;
                    run_strategy(&forecasts[j], &bs, &window, fee, initial)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StrategyRun {
                label: pred.label(),
                forecasts,
                ledgers,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let buy_and_hold = all
        .iter()
        .map(|s| (s.name.clone(), buy_and_hold(&s.slice(first_pred..n_prices), initial)))
        .collect();
    Ok(BacktestResult {
        plan,
        stock_names: stocks.iter().map(|s| s.name.clone()).collect(),
        index_names: indices.iter().map(|s| s.name.clone()).collect(),
        dates: stocks[0].dates[first_pred + 1..].to_vec(),
        runs,
        buy_and_hold,
        initial,
    })
}
