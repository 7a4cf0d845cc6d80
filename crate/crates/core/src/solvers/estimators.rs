//! Instantiations of the shared lasso core.

use nalgebra::DVector;

use crate::error::{Result, SdrError};
use crate::kernels::{Dataset, PseudoResponse};
use crate::linalg::{solve_lower, solve_upper, LowerTriangular, SymmetricMatrix};

use super::lasso::{kkt_residual, LassoSolver, QuadraticForm, SolveOptions, SparseFit};

/// Penalty weights `ω_k = |β̄_k|^{-γ}`; zero initial components give `∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveWeights {
    pub omega: Vec<f64>,
    pub gamma: f64,
    pub source: String,
}

pub fn adaptive_weights(beta_bar: &DVector<f64>, gamma: f64) -> AdaptiveWeights {
    adaptive_weights_from(beta_bar, gamma, "initial estimate")
}

pub fn adaptive_weights_from(beta_bar: &DVector<f64>, gamma: f64, source: &str) -> AdaptiveWeights {
    let omega = beta_bar
        .iter()
        .map(|b| if *b == 0.0 { f64::INFINITY } else { b.abs().powf(-gamma) })
        .collect();
    AdaptiveWeights { omega, gamma, source: source.to_string() }
}

/// `β̄ = Σ̂⁻¹η̂` through the Cholesky factor `Σ̂ = L̂L̂ᵀ`.
pub fn unpenalized_from_factor(l: &LowerTriangular, eta: &DVector<f64>) -> Result<DVector<f64>> {
    let z = solve_lower(l, eta)?;
    solve_upper(l, &z)
}

pub fn unpenalized(sigma: &SymmetricMatrix, eta: &DVector<f64>) -> Result<DVector<f64>> {
    let l = crate::linalg::cholesky(sigma)?;
    unpenalized_from_factor(&l, eta)
}

/// Quadratic form of `½‖L̂ᵀβ − κ̂‖²` with `κ̂ = L̂⁻¹η̂`; its linear term is `η̂` itself.
pub fn chomp_form(l: &LowerTriangular, eta: &DVector<f64>) -> Result<QuadraticForm> {
    let kappa = solve_lower(l, eta)?;
    let lm = l.matrix();
    let gram = SymmetricMatrix::symmetrize(lm * lm.transpose())?.into_inner();
    let lin = lm * &kappa;
    QuadraticForm::new(gram, lin, kappa.norm_squared())
}

/// Quadratic form of `½‖Σ̂β − η̂‖²`.
pub fn matrix_lasso_form(sigma: &SymmetricMatrix, eta: &DVector<f64>) -> Result<QuadraticForm> {
    let s = sigma.matrix();
    if eta.len() != s.nrows() {
        return Err(SdrError::DimensionMismatch { expected: s.nrows(), found: eta.len() });
    }
    let gram = SymmetricMatrix::symmetrize(s.tr_mul(s))?.into_inner();
    QuadraticForm::new(gram, s.tr_mul(eta), eta.norm_squared())
}

/// Quadratic form of `(2n)⁻¹‖ỹ − Xβ‖²`.
pub fn lasso_sir_form(data: &Dataset, ytilde: &PseudoResponse) -> Result<QuadraticForm> {
    let n = data.n() as f64;
    if ytilde.values.len() != data.n() {
        return Err(SdrError::DimensionMismatch { expected: data.n(), found: ytilde.values.len() });
    }
    let x = data.x();
    let gram = SymmetricMatrix::symmetrize(x.tr_mul(x) / n)?.into_inner();
    let lin = x.tr_mul(&ytilde.values) / n;
    QuadraticForm::new(gram, lin, ytilde.values.norm_squared() / n)
}

pub fn chomp(
    l: &LowerTriangular,
    eta: &DVector<f64>,
    mu: f64,
    weights: Option<&AdaptiveWeights>,
    opts: SolveOptions,
) -> Result<SparseFit> {
    let form = chomp_form(l, eta)?;
    let w = weights.map(|w| w.omega.clone()).unwrap_or_else(|| vec![1.0; eta.len()]);
    LassoSolver::new(&form, w, opts)?.solve(mu)
}

pub fn matrix_lasso(sigma: &SymmetricMatrix, eta: &DVector<f64>, mu: f64, opts: SolveOptions) -> Result<SparseFit> {
    let form = matrix_lasso_form(sigma, eta)?;
    LassoSolver::uniform(&form, opts).solve(mu)
}

pub fn lasso_sir(data: &Dataset, ytilde: &PseudoResponse, mu: f64, opts: SolveOptions) -> Result<SparseFit> {
    let form = lasso_sir_form(data, ytilde)?;
    LassoSolver::uniform(&form, opts).solve(mu)
}

/// Unpenalized fit wrapped as a [`SparseFit`] with its residual against `Σ̂β = η̂`.
pub fn unpenalized_fit(l: &LowerTriangular, eta: &DVector<f64>) -> Result<SparseFit> {
    let beta = unpenalized_from_factor(l, eta)?;
    let lm = l.matrix();
    let grad = lm * (lm.tr_mul(&beta)) - eta;
    let kkt = kkt_residual(&beta, &grad, &vec![1.0; beta.len()], 0.0);
    Ok(SparseFit::dense(beta, kkt))
}
