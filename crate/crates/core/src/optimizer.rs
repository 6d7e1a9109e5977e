//! Limited-memory BFGS with a strong-Wolfe line search, plus the multi-restart
//! driver used for hyperparameter fitting.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_BRACKET: usize = 40;
const MAX_ZOOM: usize = 40;

/// How the initial point of each restart is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitPrior {
    /// Every free unconstrained coordinate ~ U(0, 1).
    #[default]
    Uniform01,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub init_prior: InitPrior,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 200,
            grad_tol: 1e-6,
            seed: 0,
            init_prior: InitPrior::Uniform01,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn minimize_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            ..MinimizeOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Stop when the Euclidean norm of the gradient falls to this value.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the objective by less than
    /// `f_tol · max(1, |f|)`.
    pub f_tol: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-6,
            f_tol: 1e-13,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective values at every accepted iterate, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::FunctionTolerance
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + alpha * b).collect()
}

/// Minimizes `objective` given a separate `gradient` closure.
pub fn minimize<F, G>(mut objective: F, mut gradient: G, x0: &[f64], opts: &MinimizeOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    minimize_fused(
        |x| {
            let f = objective(x);
            if f.is_finite() {
                (f, gradient(x))
            } else {
                (f, vec![f64::NAN; x.len()])
            }
        },
        x0,
        opts,
    )
}

struct Eval {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

struct LineSearch<'a, F> {
    func: &'a mut F,
    x: &'a [f64],
    p: &'a [f64],
    f0: f64,
    dphi0: f64,
    evals: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn eval(&mut self, alpha: f64) -> Eval {
        self.evals += 1;
        let xn = axpy(self.x, alpha, self.p);
        let (f, g) = (self.func)(&xn);
        let ok = f.is_finite() && g.iter().all(|v| v.is_finite());
        if ok {
            let dphi = dot(&g, self.p);
            Eval { alpha, f, g, dphi }
        } else {
            Eval {
                alpha,
                f: f64::INFINITY,
                g,
                dphi: f64::NAN,
            }
        }
    }

    fn armijo_fails(&self, e: &Eval) -> bool {
        !e.f.is_finite() || e.f > self.f0 + C1 * e.alpha * self.dphi0
    }

    fn curvature_ok(&self, e: &Eval) -> bool {
        e.dphi.abs() <= -C2 * self.dphi0
    }

    /// Returns an iterate satisfying the strong Wolfe conditions, or the best
    /// sufficient-decrease point found, or `None`.
    fn search(&mut self, alpha0: f64) -> Option<Eval> {
        let start = Eval {
            alpha: 0.0,
            f: self.f0,
            g: Vec::new(),
            dphi: self.dphi0,
        };
        let mut prev = start;
        let mut alpha = alpha0;
        for i in 0..MAX_BRACKET {
            let cur = self.eval(alpha);
            if !cur.f.is_finite() {
                // step left the domain; backtrack toward the last good point
                if prev.alpha == 0.0 && i + 1 < MAX_BRACKET {
                    alpha *= 0.1;
                    continue;
                }
                return self.zoom(prev, cur);
            }
            if self.armijo_fails(&cur) || (i > 0 && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature_ok(&cur) {
                return Some(cur);
            }
            if cur.dphi >= 0.0 {
                return self.zoom(cur, prev);
            }
            alpha = cur.alpha * 2.0;
            prev = cur;
        }
        if prev.alpha > 0.0 {
            Some(prev)
        } else {
            None
        }
    }

    fn zoom(&mut self, mut lo: Eval, mut hi: Eval) -> Option<Eval> {
        for _ in 0..MAX_ZOOM {
            let alpha = interpolate(&lo, &hi);
            if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
                break;
            }
            let cur = self.eval(alpha);
            if self.armijo_fails(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature_ok(&cur) {
                    return Some(cur);
                }
                if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        if lo.alpha > 0.0 && lo.f < self.f0 {
            Some(lo)
        } else {
            None
        }
    }
}

/// Safeguarded cubic interpolation between two bracket ends; falls back to
/// bisection when either end lacks finite information.
fn interpolate(lo: &Eval, hi: &Eval) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    if !(hi.f.is_finite() && hi.dphi.is_finite() && lo.dphi.is_finite()) {
        return mid;
    }
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = hi.dphi - lo.dphi + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let t = b - (b - a) * (hi.dphi + d2 - d1) / denom;
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if !t.is_finite() || t < left + margin || t > right - margin {
        mid
    } else {
        t
    }
}

/// Minimizes a function returning `(value, gradient)` together.
///
/// A non-finite value marks a point outside the domain: the line search
/// backtracks away from it. The value at `x0` must be finite.
pub fn minimize_fused<F>(mut func: F, x0: &[f64], opts: &MinimizeOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0.to_vec();
    let (mut f, mut g) = func(&x);
    let mut evaluations = 1;
    if !f.is_finite() || g.len() != x.len() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimization(format!(
            "objective is not finite at the starting point (f = {f})"
        )));
    }
    let mut trace = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if norm(&g) <= opts.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut p = two_loop(&g, &pairs);
        let mut dphi0 = dot(&g, &p);
        if !(dphi0 < 0.0) {
            pairs.clear();
            p = g.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &p);
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / norm(&g)).min(1.0)
        } else {
            1.0
        };
        let mut ls = LineSearch {
            func: &mut func,
            x: &x,
            p: &p,
            f0: f,
            dphi0,
            evals: 0,
        };
        let found = ls.search(alpha0);
        evaluations += ls.evals;
        let step = match found {
            Some(step) => step,
            None if !pairs.is_empty() => {
                // curvature model went stale; retry from steepest descent
                pairs.clear();
                continue;
            }
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        };
        iterations += 1;
        let s: Vec<f64> = p.iter().map(|v| v * step.alpha).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), y, 1.0 / sy));
        }
        let decrease = f - step.f;
        x = axpy(&x, 1.0, &s);
        f = step.f;
        g = step.g;
        trace.push(f);
        if decrease <= opts.f_tol * f.abs().max(1.0) {
            termination = if norm(&g) <= opts.grad_tol {
                Termination::GradientTolerance
            } else {
                Termination::FunctionTolerance
            };
            break;
        }
    }
    if termination == Termination::MaxIterations && norm(&g) <= opts.grad_tol {
        termination = Termination::GradientTolerance;
    }
    Ok(Minimum {
        gradient_norm: norm(&g),
        x,
        value: f,
        iterations,
        evaluations,
        termination,
        trace,
    })
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Result of a single restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub params: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct BestRestart {
    pub seed: u64,
    pub outcome: RestartOutcome,
    /// False when no restart converged and the best unconverged run was taken.
    pub any_converged: bool,
    /// Restarts that raised, with their seeds.
    pub failures: Vec<(u64, String)>,
}

/// Runs `fit_one` for seeds `opts.seed .. opts.seed + opts.restarts` and keeps
/// the lowest objective, preferring converged runs; exact ties go to the
/// lowest seed. Restarts run on the current rayon pool.
pub fn multi_restart<F>(fit_one: F, opts: &FitOptions) -> Result<BestRestart>
where
    F: Fn(u64) -> Result<RestartOutcome> + Sync,
{
    opts.validate()?;
    let seeds: Vec<u64> = (0..opts.restarts as u64).map(|i| opts.seed.wrapping_add(i)).collect();
    let results: Vec<(u64, Result<RestartOutcome>)> =
        seeds.par_iter().map(|&s| (s, fit_one(s))).collect();
    select_best(results)
}

fn select_best(results: Vec<(u64, Result<RestartOutcome>)>) -> Result<BestRestart> {
    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(o) if o.value.is_finite() => ok.push((seed, o)),
            Ok(o) => failures.push((seed, format!("non-finite objective {}", o.value))),
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    if ok.is_empty() {
        let detail = failures
            .iter()
            .map(|(s, e)| format!("seed {s}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Fit(format!("every restart failed ({detail})")));
    }
    let any_converged = ok.iter().any(|(_, o)| o.converged);
    let (seed, outcome) = ok
        .into_iter()
        .filter(|(_, o)| o.converged || !any_converged)
        .min_by(|(sa, a), (sb, b)| a.value.total_cmp(&b.value).then(sa.cmp(sb)))
        .expect("at least one candidate");
    Ok(BestRestart {
        seed,
        outcome,
        any_converged,
        failures,
    })
}
