//! Steepest descent and nonlinear conjugate gradients with a strong Wolfe
//! line search, projected variants for bound and monotonicity constraints,
//! and smoothing of recovered profiles.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FirnError, Result};
use crate::objective::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Steepest,
    #[default]
    Ncg,
}

/// Conjugate-gradient update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaRule {
    /// Hestenes-Stiefel.
    Hs,
    /// Fletcher-Reeves.
    Fr,
    /// Polak-Ribiere.
    Pr,
    /// Hager-Zhang.
    #[default]
    Hz,
    /// Always zero, which reduces the iteration to steepest descent.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    #[default]
    None,
    /// `d >= 0`.
    Nonneg,
    /// `d_1 >= d_2 >= ... >= d_n >= 0`.
    NonnegDecreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_bracket: usize,
    pub max_zoom: usize,
    pub alpha_max: f64,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_bracket: 30,
            max_zoom: 40,
            alpha_max: 1e10,
        }
    }
}

impl WolfeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(FirnError::InvalidParameter(format!(
                "line search needs 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub beta: BetaRule,
    pub constraints: Constraint,
    /// Stop when the (projected) gradient norm drops below `tol_grad * max(1, initial norm)`.
    pub tol_grad: f64,
    pub max_iters: usize,
    pub wolfe: WolfeParams,
    /// Re-check both Wolfe inequalities on every accepted step and fail loudly if violated.
    pub check_steps: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Ncg,
            beta: BetaRule::Hz,
            constraints: Constraint::None,
            tol_grad: 1e-8,
            max_iters: 1000,
            wolfe: WolfeParams::default(),
            check_steps: false,
        }
    }
}

impl OptimizerConfig {
    pub fn steepest() -> Self {
        Self {
            method: Method::Steepest,
            tol_grad: 1e-6,
            ..Self::default()
        }
    }

    fn effective_beta(&self) -> BetaRule {
        match self.method {
            Method::Steepest => BetaRule::Zero,
            Method::Ncg => self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
    NoProgress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub d_final: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub wall_time_s: f64,
    pub objective_history: Vec<f64>,
    pub grad_norm_history: Vec<f64>,
    pub termination: Termination,
    pub l2_relative_error: Option<f64>,
    pub config: OptimizerConfig,
}

impl OptimizerReport {
    /// Fills in the relative L2 error against a known profile.
    pub fn with_truth(mut self, truth: &[f64]) -> Self {
        self.l2_relative_error = Some(l2_relative_error(&self.d_final, truth));
        self
    }
}

pub fn l2_relative_error(d: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = d.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = truth.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Accepted step of a line search, with whatever the trial evaluation produced.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome<T> {
    pub alpha: f64,
    pub phi: f64,
    pub dphi: f64,
    pub payload: T,
    pub evaluations: usize,
    /// False when the iteration budget ran out and the best sufficient-decrease point was returned.
    pub converged: bool,
}

struct Trial<T> {
    alpha: f64,
    phi: f64,
    dphi: f64,
    payload: Option<T>,
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, if it exists.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let x = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    x.is_finite().then_some(x)
}

/// Bracketing and zoom search for a step satisfying the strong Wolfe conditions.
///
/// `phi(alpha)` returns `(value, derivative, payload)`; non-finite values mark
/// a step as too long.
pub fn line_search_strong_wolfe<T, F>(
    mut phi: F,
    phi0: f64,
    dphi0: f64,
    alpha0: f64,
    params: &WolfeParams,
) -> Result<LineSearchOutcome<T>>
where
    F: FnMut(f64) -> Result<(f64, f64, T)>,
{
    params.validate()?;
    if dphi0.is_nan() || dphi0 >= 0.0 {
        return Err(FirnError::LineSearch(format!(
            "not a descent direction (derivative {dphi0:e})"
        )));
    }
    let (c1, c2) = (params.c1, params.c2);
    let mut evals = 0;
    let armijo = |a: f64, v: f64| v <= phi0 + c1 * a * dphi0;
    let curvature = |d: f64| d.abs() <= -c2 * dphi0;

    let mut prev = Trial::<T> {
        alpha: 0.0,
        phi: phi0,
        dphi: dphi0,
        payload: None,
    };
    let mut alpha = alpha0.clamp(f64::MIN_POSITIVE, params.alpha_max);
    let bracket: std::result::Result<(Trial<T>, Trial<T>), Trial<T>> = 'outer: {
        for i in 0..params.max_bracket {
            let (v, d, p) = phi(alpha)?;
            evals += 1;
            let cur = Trial {
                alpha,
                phi: v,
                dphi: d,
                payload: Some(p),
            };
            if !v.is_finite() || !armijo(alpha, v) || (i > 0 && v >= prev.phi) {
                break 'outer Ok((prev, cur));
            }
            if curvature(d) {
                return Ok(LineSearchOutcome {
                    alpha,
                    phi: v,
                    dphi: d,
                    payload: cur.payload.expect("evaluated"),
                    evaluations: evals,
                    converged: true,
                });
            }
            if d >= 0.0 {
                break 'outer Ok((cur, prev));
            }
            if alpha >= params.alpha_max {
                return Ok(LineSearchOutcome {
                    alpha,
                    phi: v,
                    dphi: d,
                    payload: cur.payload.expect("evaluated"),
                    evaluations: evals,
                    converged: false,
                });
            }
            let next = (4.0 * alpha).min(params.alpha_max);
            prev = cur;
            alpha = next;
        }
        Err(prev)
    };
    let (mut lo, mut hi) = match bracket {
        Ok(pair) => pair,
        Err(last) => return finish(last, evals),
    };

    for _ in 0..params.max_zoom {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= f64::EPSILON * b.max(1.0) {
            break;
        }
        let guess = if hi.phi.is_finite() && hi.dphi.is_finite() {
            cubic_min(lo.alpha, lo.phi, lo.dphi, hi.alpha, hi.phi, hi.dphi)
        } else {
            None
        };
        let alpha = match guess {
            Some(x) if x > a + 0.1 * width && x < b - 0.1 * width => x,
            _ => 0.5 * (lo.alpha + hi.alpha),
        };
        let (v, d, p) = phi(alpha)?;
        evals += 1;
        let cur = Trial {
            alpha,
            phi: v,
            dphi: d,
            payload: Some(p),
        };
        if !v.is_finite() || !armijo(alpha, v) || v >= lo.phi {
            hi = cur;
        } else {
            if curvature(d) {
                return Ok(LineSearchOutcome {
                    alpha,
                    phi: v,
                    dphi: d,
                    payload: cur.payload.expect("evaluated"),
                    evaluations: evals,
                    converged: true,
                });
            }
            if d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    finish(lo, evals)
}

fn finish<T>(best: Trial<T>, evals: usize) -> Result<LineSearchOutcome<T>> {
    match best.payload {
        Some(payload) if best.alpha > 0.0 => Ok(LineSearchOutcome {
            alpha: best.alpha,
            phi: best.phi,
            dphi: best.dphi,
            payload,
            evaluations: evals,
            converged: false,
        }),
        _ => Err(FirnError::LineSearch(
            "no step with sufficient decrease was found".into(),
        )),
    }
}

/// Conjugate-gradient coefficient for the new gradient `g`, old gradient `g_old`
/// and previous direction `dir`.
pub fn beta_coefficient(rule: BetaRule, g: &[f64], g_old: &[f64], dir: &[f64]) -> f64 {
    let y: Vec<f64> = g.iter().zip(g_old).map(|(a, b)| a - b).collect();
    let gg_old = dot(g_old, g_old);
    let dy = dot(dir, &y);
    let beta = match rule {
        BetaRule::Zero => 0.0,
        BetaRule::Fr => dot(g, g) / gg_old,
        BetaRule::Pr => dot(g, &y) / gg_old,
        BetaRule::Hs => dot(g, &y) / dy,
        BetaRule::Hz => {
            let yy = dot(&y, &y);
            let raw = (dot(&y, g) - 2.0 * yy * dot(dir, g) / dy) / dy;
            let eta = -1.0 / (norm(dir) * norm(g_old).min(0.01));
            raw.max(eta)
        }
    };
    if beta.is_finite() {
        beta
    } else {
        0.0
    }
}

/// Objective value with solver breakdowns mapped to `+inf`, so a line search can back off.
fn soft_value_grad(obj: &dyn Objective, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    match obj.value_and_gradient(x) {
        Ok(v) => Ok(v),
        Err(FirnError::Singular { .. } | FirnError::NonFinite { .. }) => {
            Ok((f64::INFINITY, vec![f64::NAN; x.len()]))
        }
        Err(e) => Err(e),
    }
}

fn soft_value(obj: &dyn Objective, x: &[f64]) -> Result<f64> {
    match obj.value(x) {
        Ok(v) => Ok(v),
        Err(FirnError::Singular { .. } | FirnError::NonFinite { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn attach(iteration: usize, iterate: &[f64], e: FirnError) -> FirnError {
    FirnError::Optimizer {
        iteration,
        iterate: iterate.to_vec(),
        source: Box::new(e),
    }
}

/// Unconstrained steepest descent or nonlinear CG from `x0`.
pub fn ncg_minimize(
    obj: &dyn Objective,
    x0: &[f64],
    config: &OptimizerConfig,
) -> Result<OptimizerReport> {
    if config.constraints != Constraint::None {
        return projected_minimize(obj, x0, config);
    }
    config.wolfe.validate()?;
    check_start(obj, x0)?;
    let start = Instant::now();
    let n = x0.len();
    let beta_rule = config.effective_beta();
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.value_and_gradient(&x).map_err(|e| attach(0, &x, e))?;
    let mut evals = 1;
    let g0 = norm(&g);
    let threshold = config.tol_grad * g0.max(1.0);
    let mut objective_history = vec![f];
    let mut grad_norm_history = vec![g0];
    let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut f_prev: Option<f64> = None;
    let mut since_restart = 0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    while iterations < config.max_iters {
        if norm(&g) <= threshold {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut dphi0 = dot(&g, &dir);
        if dphi0 >= 0.0 || !dphi0.is_finite() {
            dir = g.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &dir);
            since_restart = 0;
        }
        let alpha0 = match f_prev {
            Some(fp) => {
                let a = 2.0 * (f - fp) / dphi0;
                if a.is_finite() && a > 0.0 {
                    a
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let search = line_search_strong_wolfe(
            |alpha| {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
                let (v, gr) = soft_value_grad(obj, &trial)?;
                let d = dot(&gr, &dir);
                Ok((v, if v.is_finite() { d } else { f64::NAN }, (trial, gr)))
            },
            f,
            dphi0,
            alpha0,
            &config.wolfe,
        );
        let step = match search {
            Ok(s) => s,
            Err(FirnError::LineSearch(_)) => {
                termination = Termination::LineSearchFailed;
                break;
            }
            Err(e) => return Err(attach(iterations, &x, e)),
        };
        evals += step.evaluations;
        if config.check_steps && step.converged {
            let c = &config.wolfe;
            assert!(
                step.phi <= f + c.c1 * step.alpha * dphi0,
                "sufficient decrease violated"
            );
            assert!(
                step.dphi.abs() <= -c.c2 * dphi0,
                "curvature condition violated"
            );
        }
        let (x_new, g_new) = step.payload;
        if step.phi.is_nan() || step.phi >= f {
            termination = Termination::NoProgress;
            break;
        }
        let beta = if since_restart + 1 >= 5 * n {
            since_restart = 0;
            0.0
        } else {
            since_restart += 1;
            beta_coefficient(beta_rule, &g_new, &g, &dir)
        };
        dir = g_new.iter().zip(&dir).map(|(a, b)| -a + beta * b).collect();
        f_prev = Some(f);
        f = step.phi;
        x = x_new;
        g = g_new;
        iterations += 1;
        objective_history.push(f);
        grad_norm_history.push(norm(&g));
    }
    if termination == Termination::MaxIterations && norm(&g) <= threshold {
        termination = Termination::GradientTolerance;
    }
    Ok(OptimizerReport {
        d_final: x,
        value: f,
        iterations,
        evaluations: evals,
        wall_time_s: start.elapsed().as_secs_f64(),
        objective_history,
        grad_norm_history,
        termination,
        l2_relative_error: None,
        config: config.clone(),
    })
}

fn check_start(obj: &dyn Objective, x0: &[f64]) -> Result<()> {
    if x0.len() != obj.dim() {
        return Err(FirnError::DimensionMismatch {
            expected: obj.dim(),
            actual: x0.len(),
            context: "initial guess vs objective dimension",
        });
    }
    Ok(())
}

/// Euclidean projection onto the constraint set.
pub fn project(x: &[f64], constraint: Constraint) -> Vec<f64> {
    match constraint {
        Constraint::None => x.to_vec(),
        Constraint::Nonneg => x.iter().map(|v| v.max(0.0)).collect(),
        Constraint::NonnegDecreasing => {
            pava_decreasing(x).into_iter().map(|v| v.max(0.0)).collect()
        }
    }
}

/// Least-squares nonincreasing fit by pooling adjacent violators.
pub fn pava_decreasing(x: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(x.len());
    for &v in x {
        let mut cur = (v, 1usize);
        while let Some(&(m, w)) = blocks.last() {
            if m >= cur.0 {
                break;
            }
            blocks.pop();
            let total = w + cur.1;
            cur = ((m * w as f64 + cur.0 * cur.1 as f64) / total as f64, total);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat_n(m, w))
        .collect()
}

/// `||P(x - g) - x||`, zero exactly at stationary points of the constrained problem.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], constraint: Constraint) -> f64 {
    let step: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
    let p = project(&step, constraint);
    p.iter()
        .zip(x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Projected steepest descent or projected nonlinear CG.
///
/// Each step searches along the projection arc `P(x + alpha * dir)` with
/// backtracking on the sufficient-decrease condition.
pub fn projected_minimize(
    obj: &dyn Objective,
    x0: &[f64],
    config: &OptimizerConfig,
) -> Result<OptimizerReport> {
    config.wolfe.validate()?;
    check_start(obj, x0)?;
    let start = Instant::now();
    let cons = config.constraints;
    let beta_rule = config.effective_beta();
    let n = x0.len();
    let mut x = project(x0, cons);
    let (mut f, mut g) = obj.value_and_gradient(&x).map_err(|e| attach(0, &x, e))?;
    let mut evals = 1;
    let pg0 = projected_gradient_norm(&x, &g, cons);
    let threshold = config.tol_grad * pg0.max(1.0);
    let mut objective_history = vec![f];
    let mut grad_norm_history = vec![pg0];
    let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut last_step: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut since_restart = 0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    while iterations < config.max_iters {
        if projected_gradient_norm(&x, &g, cons) <= threshold {
            termination = Termination::GradientTolerance;
            break;
        }
        // Spectral step length from the last accepted move.
        let alpha0 = match &last_step {
            Some((s, y)) => {
                let sy = dot(s, y);
                let ss = dot(s, s);
                let gd = -dot(&g, &dir);
                let a = if sy > 0.0 { ss / sy } else { 1.0 };
                // Rescale from gradient units to the current direction.
                let scale = if gd > 0.0 { dot(&g, &g) / gd } else { 1.0 };
                (a * scale).clamp(1e-12, 1e12)
            }
            None => 1.0 / norm(&g).max(1e-300) * norm(&x).max(1.0),
        };
        let mut accepted = None;
        let mut alpha = alpha0;
        let mut tried_gradient = beta_rule == BetaRule::Zero;
        for _ in 0..60 {
            let trial_raw: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            let trial = project(&trial_raw, cons);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if decrease >= 0.0 {
                if norm(&moved) == 0.0 {
                    break;
                }
                if !tried_gradient {
                    dir = g.iter().map(|v| -v).collect();
                    tried_gradient = true;
                    since_restart = 0;
                    continue;
                }
                alpha *= 0.5;
                continue;
            }
            let v = soft_value(obj, &trial).map_err(|e| attach(iterations, &x, e))?;
            evals += 1;
            if v.is_finite() && v <= f + config.wolfe.c1 * decrease {
                accepted = Some((trial, v));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let (fv, g_new) = obj
            .value_and_gradient(&x_new)
            .map_err(|e| attach(iterations, &x_new, e))?;
        evals += 1;
        debug_assert!((fv - f_new).abs() <= 1e-12 * fv.abs().max(1.0));
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let beta = if since_restart + 1 >= 5 * n {
            since_restart = 0;
            0.0
        } else {
            since_restart += 1;
            beta_coefficient(beta_rule, &g_new, &g, &dir)
        };
        // Directions are built from the gradient restricted to free variables.
        let free = free_gradient(&x_new, &g_new, cons);
        dir = free.iter().zip(&dir).map(|(a, b)| -a + beta * b).collect();
        if dot(&dir, &g_new) >= 0.0 {
            dir = g_new.iter().map(|v| -v).collect();
            since_restart = 0;
        }
        let progress = f - f_new;
        f = f_new;
        x = x_new;
        g = g_new;
        last_step = Some((s, y));
        iterations += 1;
        objective_history.push(f);
        grad_norm_history.push(projected_gradient_norm(&x, &g, cons));
        if progress <= 0.0 {
            termination = Termination::NoProgress;
            break;
        }
    }
    if termination != Termination::GradientTolerance
        && projected_gradient_norm(&x, &g, cons) <= threshold
    {
        termination = Termination::GradientTolerance;
    }
    Ok(OptimizerReport {
        d_final: x,
        value: f,
        iterations,
        evaluations: evals,
        wall_time_s: start.elapsed().as_secs_f64(),
        objective_history,
        grad_norm_history,
        termination,
        l2_relative_error: None,
        config: config.clone(),
    })
}

/// Gradient with components zeroed where a bound is active and the gradient pushes outward.
fn free_gradient(x: &[f64], g: &[f64], cons: Constraint) -> Vec<f64> {
    match cons {
        Constraint::None => g.to_vec(),
        Constraint::Nonneg => x
            .iter()
            .zip(g)
            .map(|(&xi, &gi)| if xi <= 0.0 && gi > 0.0 { 0.0 } else { gi })
            .collect(),
        Constraint::NonnegDecreasing => {
            // Stationary part of the step: P(x - g) - x, sign-flipped.
            let step: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
            project(&step, cons)
                .iter()
                .zip(x)
                .map(|(p, xi)| xi - p)
                .collect()
        }
    }
}

/// Smoothing applied to a recovered profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", content = "degree", rename_all = "snake_case")]
pub enum Postprocess {
    #[default]
    None,
    ClampNonneg,
    /// Least-squares polynomial of the given degree, evaluated at the nodes.
    Polyfit(usize),
}

pub fn postprocess_profile(d: &[f64], nodes: &[f64], mode: Postprocess) -> Result<Vec<f64>> {
    match mode {
        Postprocess::None => Ok(d.to_vec()),
        Postprocess::ClampNonneg => Ok(d.iter().map(|v| v.max(0.0)).collect()),
        Postprocess::Polyfit(k) => {
            let n = d.len();
            if nodes.len() != n {
                return Err(FirnError::DimensionMismatch {
                    expected: n,
                    actual: nodes.len(),
                    context: "node coordinates vs profile",
                });
            }
            if k >= n {
                return Err(FirnError::InvalidParameter(format!(
                    "polynomial degree {k} needs more than {n} samples"
                )));
            }
            let v = DMatrix::from_fn(n, k + 1, |i, j| nodes[i].powi(j as i32));
            let rhs = DVector::from_column_slice(d);
            let coef = v
                .clone()
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .map_err(|e| FirnError::InvalidParameter(format!("polynomial fit: {e}")))?;
            Ok((v * coef).iter().copied().collect())
        }
    }
}
