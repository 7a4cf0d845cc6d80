//! Tuning-parameter selection: projection information criterion and
//! cross-validation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrError};
use crate::kernels::{Dataset, PseudoResponse};
use crate::linalg::vector_projection_distance_sq;
use crate::solvers::{QuadraticForm, SolveOptions, SparseFit};

/// Rule for the complexity weight `τ` in the projection criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRule {
    LogPOverP,
    TwoOverP,
    Custom(f64),
}

impl TauRule {
    pub fn value(self, p: usize) -> f64 {
        let pf = p as f64;
        match self {
            TauRule::LogPOverP => pf.ln() / pf,
            TauRule::TwoOverP => 2.0 / pf,
            TauRule::Custom(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningKind {
    /// Projection information criterion; `None` picks the regime default.
    Pic { tau: Option<TauRule> },
    CrossValidation { folds: usize },
    Fixed { mu: f64 },
    /// `μ_j = M·(log p / (n|λ̂_j|))^{1/2}`.
    TheoreticalRate { m: f64 },
    /// Picks the grid point closest to a known true direction. Simulation only.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningPolicy {
    pub kind: TuningKind,
    /// Ascending μ values; `None` uses [`default_grid`] (scaled for Matrix Lasso).
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
}

impl TuningPolicy {
    pub fn pic() -> Self {
        TuningPolicy { kind: TuningKind::Pic { tau: None }, grid: None }
    }

    pub fn cross_validation(folds: usize) -> Self {
        TuningPolicy { kind: TuningKind::CrossValidation { folds }, grid: None }
    }

    pub fn fixed(mu: f64) -> Self {
        TuningPolicy { kind: TuningKind::Fixed { mu }, grid: None }
    }

    pub fn theoretical(m: f64) -> Self {
        TuningPolicy { kind: TuningKind::TheoreticalRate { m }, grid: None }
    }

    pub fn oracle() -> Self {
        TuningPolicy { kind: TuningKind::Oracle, grid: None }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.grid {
            validate_grid(g)?;
        }
        match self.kind {
            TuningKind::CrossValidation { folds } if folds < 2 => {
                Err(SdrError::InvalidConfig(format!("cross-validation needs at least 2 folds, got {folds}")))
            }
            TuningKind::Fixed { mu } if !(mu >= 0.0 && mu.is_finite()) => {
                Err(SdrError::InvalidConfig(format!("fixed tuning parameter must be finite and >= 0, got {mu}")))
            }
            TuningKind::TheoreticalRate { m } if !(m > 0.0 && m.is_finite()) => {
                Err(SdrError::InvalidConfig(format!("rate constant must be positive, got {m}")))
            }
            TuningKind::Pic { tau: Some(TauRule::Custom(t)) } if !(t > 0.0 && t.is_finite()) => {
                Err(SdrError::InvalidConfig(format!("custom tau must be positive, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// `0` followed by 100 log-spaced points from `1e-4` to `1`.
pub fn default_grid() -> Vec<f64> {
    let mut g = Vec::with_capacity(101);
    g.push(0.0);
    let (lo, hi) = (1e-4_f64.ln(), 0.0_f64);
    for i in 0..100 {
        let t = i as f64 / 99.0;
        g.push((lo + t * (hi - lo)).exp());
    }
    *g.last_mut().expect("non-empty") = 1.0;
    g
}

/// [`default_grid`] stretched so its upper end is `upper`.
pub fn scaled_grid(upper: f64) -> Vec<f64> {
    default_grid().into_iter().map(|m| m * upper).collect()
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(SdrError::InvalidConfig("tuning grid is empty".into()));
    }
    if grid.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(SdrError::InvalidConfig("tuning grid values must be finite and >= 0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SdrError::InvalidConfig("tuning grid must be strictly ascending".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicScore {
    pub mu: f64,
    pub loss: f64,
    pub complexity: f64,
    pub total: f64,
}

/// `‖P(β̂) − P(β̄)‖_F² + τ‖β̂‖₀`, or `∞` when `β̂ = 0`.
pub fn pic(beta_hat: &DVector<f64>, beta_bar: &DVector<f64>, tau: f64) -> Result<PicScore> {
    if beta_bar.iter().all(|v| *v == 0.0) {
        return Err(SdrError::ZeroReference);
    }
    if beta_hat.len() != beta_bar.len() {
        return Err(SdrError::DimensionMismatch { expected: beta_bar.len(), found: beta_hat.len() });
    }
    let nnz = beta_hat.iter().filter(|v| **v != 0.0).count();
    if nnz == 0 {
        return Ok(PicScore { mu: f64::NAN, loss: f64::INFINITY, complexity: 0.0, total: f64::INFINITY });
    }
    let loss = vector_projection_distance_sq(beta_hat, beta_bar);
    let complexity = tau * nnz as f64;
    Ok(PicScore { mu: f64::NAN, loss, complexity, total: loss + complexity })
}

/// Fits every grid point from largest to smallest `μ` and keeps the one with
/// the smallest criterion; ties go to the larger `μ`.
pub fn select_pic<F>(mut fitter: F, beta_bar: &DVector<f64>, grid: &[f64], tau: f64) -> Result<(SparseFit, PicScore)>
where
    F: FnMut(f64) -> Result<SparseFit>,
{
    validate_grid(grid)?;
    if beta_bar.iter().all(|v| *v == 0.0) {
        return Err(SdrError::ZeroReference);
    }
    let mut best: Option<(SparseFit, PicScore)> = None;
    for &mu in grid.iter().rev() {
        let fit = fitter(mu)?;
        let mut score = pic(&fit.beta, beta_bar, tau)?;
        score.mu = mu;
        if !score.total.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| score.total < b.total) {
            best = Some((fit, score));
        }
    }
    best.ok_or(SdrError::AllZeroFits)
}

/// Held-out error curve from cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub grid: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    pub selected_mu: f64,
    pub folds: usize,
}

/// Fold index for each row, from a seeded permutation; fold sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || n < folds {
        return Err(SdrError::FoldTooSmall { folds, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for f in 0..folds {
        for &i in &order[f * n / folds..(f + 1) * n / folds] {
            fold[i] = f;
        }
    }
    Ok(fold)
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |r, c| x[(idx[r], c)])
}

/// Fits along `grid` (visited from largest to smallest) and returns the fits in grid order.
fn path(form: &QuadraticForm, grid: &[f64], opts: SolveOptions) -> Result<Vec<SparseFit>> {
    crate::solvers::fit_path(form, vec![1.0; form.p()], grid, opts)
}

/// K-fold cross-validation of the Lasso SIR fit over `grid`, followed by a
/// full-data refit at the selected `μ`.
pub fn cross_validate_lasso_sir(
    data: &Dataset,
    ytilde: &PseudoResponse,
    folds: usize,
    grid: &[f64],
    seed: u64,
    opts: SolveOptions,
) -> Result<(SparseFit, CvCurve)> {
    validate_grid(grid)?;
    let n = data.n();
    if ytilde.values.len() != n {
        return Err(SdrError::DimensionMismatch { expected: n, found: ytilde.values.len() });
    }
    let assignment = fold_assignment(n, folds, seed)?;
    let x = data.x();
    let y = &ytilde.values;
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let yty = y.norm_squared();

    let mut errors = vec![vec![0.0; folds]; grid.len()];
    for f in 0..folds {
        let held: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        let xf = rows(x, &held);
        let yf = DVector::from_iterator(held.len(), held.iter().map(|&i| y[i]));
        let n_train = (n - held.len()) as f64;
        let mut gram = (&xtx - xf.tr_mul(&xf)) / n_train;
        gram = (&gram + gram.transpose()) * 0.5;
        let lin = (&xty - xf.tr_mul(&yf)) / n_train;
        let tsq = ((yty - yf.norm_squared()) / n_train).max(0.0);
        let form = QuadraticForm::new(gram, lin, tsq)?;
        let fits = path(&form, grid, opts)?;
        for (g, fit) in fits.iter().enumerate() {
            let resid = &yf - &xf * &fit.beta;
            errors[g][f] = resid.norm_squared() / held.len() as f64;
        }
    }

    let mean_error: Vec<f64> = errors.iter().map(|e| e.iter().sum::<f64>() / folds as f64).collect();
    let std_error: Vec<f64> = errors
        .iter()
        .zip(&mean_error)
        .map(|(e, m)| {
            let var = e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (folds as f64 - 1.0);
            (var / folds as f64).sqrt()
        })
        .collect();
    let mut sel = grid.len() - 1;
    for g in (0..grid.len()).rev() {
        if mean_error[g] < mean_error[sel] {
            sel = g;
        }
    }
    let selected_mu = grid[sel];

    let full = crate::solvers::lasso_sir_form(data, ytilde)?;
    let descending: Vec<f64> = grid[sel..].to_vec();
    let fits = path(&full, &descending, opts)?;
    let fit = fits.into_iter().next().expect("selected point fitted");
    let curve = CvCurve { grid: grid.to_vec(), mean_error, std_error, selected_mu, folds };
    Ok((fit, curve))
}

/// The theoretical-rate tuning parameter.
pub fn theoretical_mu(m: f64, p: usize, n: usize, eigenvalue: f64) -> Result<f64> {
    let lam = eigenvalue.abs();
    if !(lam > 0.0) {
        return Err(SdrError::NonPositiveEigenvalue(eigenvalue));
    }
    Ok(m * ((p as f64).ln() / (n as f64 * lam)).sqrt())
}
