//! Weighted-lasso solver shared by every penalized estimator.
//!
//! Minimises `½‖Aβ − b‖² + μ Σ_k ω_k |β_k|` through the quadratic form
//! `(AᵀA, Aᵀb)`. The main engine is an active-set method over sign-orthant
//! faces with an incrementally updated Cholesky factor of the active Gram
//! block; the factor survives between calls, so warm-started grid paths only
//! pay for the coordinates that enter or leave. Cyclic coordinate descent
//! takes over when an active block is singular (e.g. `μ = 0` with `p > n`)
//! and hands back to the active-set method on a doubling schedule.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SdrError};
use super::active::ActiveFactor;
use crate::linalg::SymmetricMatrix;

/// Coefficients below this magnitude are snapped to exact zero after convergence.
pub const ZERO_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Largest coordinate change allowed in the final sweep.
    pub tol: f64,
    /// Largest KKT violation allowed at convergence.
    pub kkt_tol: f64,
    /// Keep the objective value after every sweep in [`SparseFit::objective_trace`].
    pub record_objective: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iter: 10_000, tol: 1e-8, kkt_tol: 1e-7, record_objective: false }
    }
}

/// `½βᵀGβ − cᵀβ + ½‖b‖²` with `G = AᵀA`, `c = Aᵀb`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    gram: DMatrix<f64>,
    lin: DVector<f64>,
    target_sq: f64,
}

impl QuadraticForm {
    pub fn new(gram: DMatrix<f64>, lin: DVector<f64>, target_sq: f64) -> Result<Self> {
        let p = gram.nrows();
        if gram.ncols() != p {
            return Err(SdrError::DimensionMismatch { expected: p, found: gram.ncols() });
        }
        if lin.len() != p {
            return Err(SdrError::DimensionMismatch { expected: p, found: lin.len() });
        }
        if !gram.iter().chain(lin.iter()).all(|v| v.is_finite()) || !target_sq.is_finite() {
            return Err(SdrError::NonFiniteInput("lasso problem"));
        }
        Ok(QuadraticForm { gram, lin, target_sq })
    }

    pub fn from_design(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(SdrError::DimensionMismatch { expected: a.nrows(), found: b.len() });
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(SdrError::NonFiniteInput("lasso problem"));
        }
        let gram = SymmetricMatrix::symmetrize(a.tr_mul(a))?.into_inner();
        let lin = a.tr_mul(b);
        QuadraticForm::new(gram, lin, b.norm_squared())
    }

    pub fn p(&self) -> usize {
        self.lin.len()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn lin(&self) -> &DVector<f64> {
        &self.lin
    }

    /// Smallest uniform-weight `μ` at which `β = 0` is optimal, `‖c ⊘ ω‖_∞`.
    pub fn zero_threshold(&self, weights: &[f64]) -> f64 {
        self.lin
            .iter()
            .zip(weights)
            .filter(|(_, w)| w.is_finite())
            .map(|(c, w)| if *w == 0.0 { if *c == 0.0 { 0.0 } else { f64::INFINITY } } else { c.abs() / w })
            .fold(0.0, f64::max)
    }
}

/// A lasso instance in design form.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
    /// Per-coefficient penalty weights; `f64::INFINITY` forces the coefficient to zero.
    pub weights: Vec<f64>,
    pub mu: f64,
}

/// Solution of one penalized fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFit {
    pub beta: DVector<f64>,
    pub mu: f64,
    pub support: Vec<usize>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
}

impl SparseFit {
    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(SdrError::NotConverged { iterations: self.iterations, kkt_residual: self.kkt_residual })
        }
    }

    /// A dense fit with no penalty attached (e.g. the unpenalized estimate).
    pub fn dense(beta: DVector<f64>, kkt_residual: f64) -> Self {
        let support = support_of(&beta);
        SparseFit {
            beta,
            mu: 0.0,
            support,
            kkt_residual,
            iterations: 0,
            converged: true,
            objective: f64::NAN,
            objective_trace: Vec::new(),
        }
    }
}

pub fn support_of(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, _)| k).collect()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn validate_weights(weights: &[f64], p: usize) -> Result<()> {
    if weights.len() != p {
        return Err(SdrError::DimensionMismatch { expected: p, found: weights.len() });
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(SdrError::InvalidConfig("penalty weights must be non-negative".into()));
    }
    Ok(())
}

/// Largest violation of the weighted-lasso subgradient conditions given the
/// gradient `g = Gβ − c`.
pub fn kkt_residual(beta: &DVector<f64>, grad: &DVector<f64>, weights: &[f64], mu: f64) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..beta.len() {
        let w = weights[k];
        if !w.is_finite() {
            continue;
        }
        let t = mu * w;
        let v = if beta[k] == 0.0 {
            (grad[k].abs() - t).max(0.0)
        } else {
            (grad[k] + t * beta[k].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Stateful solver over a fixed quadratic form and weight vector. Successive
/// calls to [`LassoSolver::solve`] warm-start from the previous solution.
pub struct LassoSolver<'a> {
    form: &'a QuadraticForm,
    weights: Vec<f64>,
    opts: SolveOptions,
    beta: DVector<f64>,
    factor: ActiveFactor,
}

impl<'a> LassoSolver<'a> {
    pub fn new(form: &'a QuadraticForm, weights: Vec<f64>, opts: SolveOptions) -> Result<Self> {
        validate_weights(&weights, form.p())?;
        let beta = DVector::zeros(form.p());
        let factor = ActiveFactor::new(form.p());
        Ok(LassoSolver { form, weights, opts, beta, factor })
    }

    pub fn uniform(form: &'a QuadraticForm, opts: SolveOptions) -> Self {
        LassoSolver::new(form, vec![1.0; form.p()], opts).expect("uniform weights are valid")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_warm_start(&mut self, beta: &DVector<f64>) {
        self.beta.copy_from(beta);
    }

    fn objective(&self, beta: &DVector<f64>, grad: &DVector<f64>, mu: f64) -> f64 {
        let c = &self.form.lin;
        let mut pen = 0.0;
        for k in 0..beta.len() {
            if beta[k] != 0.0 {
                pen += self.weights[k] * beta[k].abs();
            }
        }
        0.5 * beta.dot(grad) - 0.5 * c.dot(beta) + 0.5 * self.form.target_sq + mu * pen
    }

    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut g = -self.form.lin.clone();
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                g.axpy(b, &self.form.gram.column(k), 1.0);
            }
        }
        g
    }

    fn apply(&self, grad: &mut DVector<f64>, k: usize, delta: f64) {
        grad.axpy(delta, &self.form.gram.column(k), 1.0);
    }

    /// Active-set descent on orthant faces. On the current face the smooth
    /// minimiser is solved for exactly and the iterate moves towards it, up to
    /// the first coefficient that would change sign (which leaves the active
    /// set). Once stationary on a face, the inactive coordinate with the
    /// largest KKT violation is activated by an exact coordinate step. Every
    /// move lowers the objective. Returns `true` at a KKT-certified point;
    /// `false` if the budget ran out or an active block was singular, in which
    /// case `beta`/`grad` still hold a valid, no-worse iterate.
    fn active_set(
        &mut self,
        beta: &mut DVector<f64>,
        grad: &mut DVector<f64>,
        mu: f64,
        budget: usize,
        used: &mut usize,
        trace: &mut Vec<f64>,
    ) -> bool {
        let support = support_of(beta);
        if !self.factor.sync(&support, &self.form.gram) {
            return false;
        }
        let form = self.form;
        let gram = &form.gram;
        let mut spent = 0;
        let mut face_stationary = false;
        while spent < budget {
            if !face_stationary && self.factor.len() > 0 {
                spent += 1;
                let idx = self.factor.indices().to_vec();
                let rhs: Vec<f64> =
                    idx.iter().map(|&k| self.form.lin[k] - mu * self.weights[k] * beta[k].signum()).collect();
                let x = self.factor.solve(&rhs);
                if !x.iter().all(|v| v.is_finite()) {
                    *used += spent;
                    return false;
                }
                let mut t_hit = 1.0;
                let mut hit = None;
                for (a, &k) in idx.iter().enumerate() {
                    let cur = beta[k];
                    if x[a] * cur.signum() <= 0.0 {
                        let t = cur / (cur - x[a]);
                        if hit.is_none() || t < t_hit {
                            t_hit = t;
                            hit = Some(a);
                        }
                    }
                }
                for (a, &k) in idx.iter().enumerate() {
                    let cur = beta[k];
                    let mut new = if hit.is_none() { x[a] } else { cur + t_hit * (x[a] - cur) };
                    if Some(a) == hit || new.signum() != cur.signum() {
                        new = 0.0;
                    }
                    if new != cur {
                        self.apply(grad, k, new - cur);
                        beta[k] = new;
                    }
                }
                for pos in (0..idx.len()).rev() {
                    if beta[idx[pos]] == 0.0 {
                        self.factor.remove(pos);
                    }
                }
                if self.opts.record_objective {
                    trace.push(self.objective(beta, grad, mu));
                }
                face_stationary = hit.is_none();
                continue;
            }

            // inactive coordinates violating their KKT condition, worst first
            let mut violators: Vec<(usize, f64)> = (0..beta.len())
                .filter(|&k| beta[k] == 0.0 && self.weights[k].is_finite())
                .map(|k| (k, grad[k].abs() - mu * self.weights[k]))
                .filter(|(_, v)| *v > 0.0)
                .collect();
            violators.sort_by(|a, b| b.1.total_cmp(&a.1));
            let worst = violators.first().map_or(0.0, |v| v.1);
            if worst < 0.25 * self.opts.kkt_tol {
                *grad = self.gradient(beta);
                if kkt_residual(beta, grad, &self.weights, mu) < self.opts.kkt_tol {
                    *used += spent;
                    return true;
                }
                let still = (0..beta.len()).any(|k| {
                    beta[k] == 0.0 && self.weights[k].is_finite() && grad[k].abs() - mu * self.weights[k] > 0.0
                });
                if !still {
                    // active coordinates are off their stationarity system: rounding
                    *used += spent;
                    return false;
                }
            }
            // exact coordinate steps on each violator, re-checked against the current gradient
            let mut added = 0;
            for (k, _) in violators {
                let t = mu * self.weights[k];
                let gkk = gram[(k, k)];
                if grad[k].abs() <= t || !(gkk > 0.0) {
                    continue;
                }
                let new = soft_threshold(-grad[k], t) / gkk;
                if new == 0.0 {
                    continue;
                }
                spent += 1;
                self.apply(grad, k, new);
                beta[k] = new;
                if self.opts.record_objective {
                    trace.push(self.objective(beta, grad, mu));
                }
                if !self.factor.insert(k, gram) {
                    *used += spent;
                    return false;
                }
                added += 1;
                if spent >= budget {
                    break;
                }
            }
            if added == 0 {
                break;
            }
            face_stationary = false;
        }
        *used += spent;
        false
    }

    fn finish(&mut self, mut beta: DVector<f64>, mu: f64, iterations: usize, converged: bool, mut trace: Vec<f64>) -> SparseFit {
        for v in beta.iter_mut() {
            if v.abs() < ZERO_SNAP {
                *v = 0.0;
            }
        }
        let grad = self.gradient(&beta);
        let kkt = kkt_residual(&beta, &grad, &self.weights, mu);
        let objective = self.objective(&beta, &grad, mu);
        if self.opts.record_objective {
            trace.push(objective);
        }
        self.beta.copy_from(&beta);
        SparseFit {
            support: support_of(&beta),
            beta,
            mu,
            kkt_residual: kkt,
            iterations,
            converged,
            objective,
            objective_trace: trace,
        }
    }

    pub fn solve(&mut self, mu: f64) -> Result<SparseFit> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(SdrError::InvalidConfig(format!("tuning parameter must be finite and >= 0, got {mu}")));
        }
        let p = self.form.p();
        let mut beta = self.beta.clone();
        for k in 0..p {
            if !self.weights[k].is_finite() {
                beta[k] = 0.0;
            }
        }
        let mut trace = Vec::new();
        let mut grad = self.gradient(&beta);
        if self.opts.record_objective {
            trace.push(self.objective(&beta, &grad, mu));
        }

        let max_iter = self.opts.max_iter;
        let mut used = 0;
        let budget = max_iter.min(4 * p + 50);
        if self.active_set(&mut beta, &mut grad, mu, budget, &mut used, &mut trace) {
            return Ok(self.finish(beta, mu, used, true, trace));
        }

        let mut gap = 1;
        let mut next_attempt = 1;
        let mut sweep = 0;
        while used < max_iter {
            sweep += 1;
            used += 1;
            let mut max_change = 0.0_f64;
            for k in 0..p {
                let w = self.weights[k];
                if !w.is_finite() {
                    continue;
                }
                let gkk = self.form.gram[(k, k)];
                if !(gkk > 0.0) {
                    continue;
                }
                let old = beta[k];
                let new = soft_threshold(gkk * old - grad[k], mu * w) / gkk;
                if new != old {
                    let delta = new - old;
                    self.apply(&mut grad, k, delta);
                    beta[k] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if self.opts.record_objective {
                trace.push(self.objective(&beta, &grad, mu));
            }
            if sweep % 50 == 0 {
                grad = self.gradient(&beta);
            }
            let kkt = kkt_residual(&beta, &grad, &self.weights, mu);
            if max_change < self.opts.tol && kkt < self.opts.kkt_tol {
                return Ok(self.finish(beta, mu, used, true, trace));
            }
            if sweep >= next_attempt && used < max_iter {
                let budget = (max_iter - used).min(4 * p + 50);
                if self.active_set(&mut beta, &mut grad, mu, budget, &mut used, &mut trace) {
                    return Ok(self.finish(beta, mu, used, true, trace));
                }
                gap = (gap * 2).min(64);
                next_attempt = sweep + gap;
            }
        }
        Ok(self.finish(beta, mu, used, false, trace))
    }
}

/// Solves one weighted-lasso problem from a cold start.
pub fn solve_lasso(problem: &LassoProblem, opts: SolveOptions) -> Result<SparseFit> {
    let form = QuadraticForm::from_design(&problem.design, &problem.target)?;
    let mut solver = LassoSolver::new(&form, problem.weights.clone(), opts)?;
    solver.solve(problem.mu)
}

/// Fits every `μ` in `grid`, visiting them from largest to smallest with warm
/// starts. The returned fits are in the original grid order.
pub fn fit_path(form: &QuadraticForm, weights: Vec<f64>, grid: &[f64], opts: SolveOptions) -> Result<Vec<SparseFit>> {
    let mut solver = LassoSolver::new(form, weights, opts)?;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut out: Vec<Option<SparseFit>> = vec![None; grid.len()];
    for idx in order {
        out[idx] = Some(solver.solve(grid[idx])?);
    }
    Ok(out.into_iter().map(|f| f.expect("every grid point fitted")).collect())
}
