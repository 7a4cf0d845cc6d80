//! Penalized and unpenalized per-dimension estimators.

mod active;
mod estimators;
mod lasso;
mod subspace;

pub use estimators::{
    adaptive_weights, adaptive_weights_from, chomp, chomp_form, lasso_sir, lasso_sir_form, matrix_lasso,
    matrix_lasso_form, unpenalized, unpenalized_fit, unpenalized_from_factor, AdaptiveWeights,
};
pub use lasso::{
    fit_path, kkt_residual, solve_lasso, support_of, LassoProblem, LassoSolver, QuadraticForm, SolveOptions,
    SparseFit, ZERO_SNAP,
};
pub use subspace::{banded_initial_estimate, fit_subspace, CovarianceFactor, DimensionFit, Estimator, FitConfig, SubspaceEstimate};
