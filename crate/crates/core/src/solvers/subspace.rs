//! End-to-end estimation of a sparse basis for the central subspace.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrError};
use crate::highdim::banded_cholesky;
use crate::kernels::{assign_slices, kernel_phd, kernel_save, kernel_sir, pseudo_response, Dataset, KernelEstimate, Method};
use crate::linalg::{cholesky, orthonormal_basis, LowerTriangular};
use crate::tuning::{
    cross_validate_lasso_sir, default_grid, scaled_grid, select_pic, theoretical_mu, CvCurve, PicScore, TauRule,
    TuningKind, TuningPolicy,
};

use super::estimators::{adaptive_weights_from, chomp_form, lasso_sir_form, matrix_lasso_form, unpenalized_fit, unpenalized_from_factor};
use super::lasso::{LassoSolver, QuadraticForm, SolveOptions, SparseFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Estimator {
    Chomp,
    AdaptiveChomp { gamma: f64 },
    MatrixLasso,
    LassoSir,
    Unpenalized,
}

impl Estimator {
    /// Short label used in result tables.
    pub fn label(&self) -> String {
        match self {
            Estimator::Chomp => "chomp".into(),
            Estimator::AdaptiveChomp { gamma } => format!("adaptive_chomp_g{gamma}"),
            Estimator::MatrixLasso => "matrix_lasso".into(),
            Estimator::LassoSir => "lasso_sir".into(),
            Estimator::Unpenalized => "unpenalized".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Estimator::AdaptiveChomp { gamma } = self {
            if !(*gamma > 0.0 && gamma.is_finite()) {
                return Err(SdrError::InvalidConfig(format!("gamma must be positive, got {gamma}")));
            }
        }
        Ok(())
    }
}

/// Which Cholesky factor of the predictor covariance feeds CHOMP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceFactor {
    /// Cholesky factor of the sample covariance (needs `n > p`).
    Dense,
    /// Banded modified-Cholesky factor with known bandwidth.
    Banded { bandwidth: usize },
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub method: Method,
    pub estimator: Estimator,
    pub d: usize,
    pub slices: usize,
    /// `None` picks the default for the estimator: cross-validation for Lasso
    /// SIR, the projection criterion otherwise.
    pub tuning: Option<TuningPolicy>,
    pub factor: CovarianceFactor,
    pub seed: u64,
    pub solve: SolveOptions,
    /// Folds used when a cross-validated Lasso SIR fit serves as the initial estimate.
    pub reference_folds: usize,
    /// True basis, only consulted by [`TuningKind::Oracle`].
    pub oracle_truth: Option<DMatrix<f64>>,
    /// Precomputed initial estimate per dimension for the banded path, as
    /// returned by [`banded_initial_estimate`]; computed on demand when `None`.
    pub initial_estimate: Option<Vec<DVector<f64>>>,
}

impl FitConfig {
    pub fn new(method: Method, estimator: Estimator, d: usize, slices: usize) -> Self {
        FitConfig {
            method,
            estimator,
            d,
            slices,
            tuning: None,
            factor: CovarianceFactor::Dense,
            seed: 0,
            solve: SolveOptions::default(),
            reference_folds: 10,
            oracle_truth: None,
            initial_estimate: None,
        }
    }

    pub fn effective_tuning(&self) -> TuningPolicy {
        self.tuning.clone().unwrap_or_else(|| match self.estimator {
            Estimator::LassoSir => TuningPolicy::cross_validation(10),
            _ => TuningPolicy::pic(),
        })
    }

    fn default_tau(&self) -> TauRule {
        match self.factor {
            CovarianceFactor::Dense => TauRule::LogPOverP,
            CovarianceFactor::Banded { .. } => TauRule::TwoOverP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DimensionFit {
    pub fit: SparseFit,
    pub eigenvalue: f64,
    pub pic: Option<PicScore>,
    pub cv: Option<CvCurve>,
}

#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    /// `p × d`, column `j` is the fit for dimension `j`.
    pub basis: DMatrix<f64>,
    pub dims: Vec<DimensionFit>,
    pub kernel: KernelEstimate,
    pub warnings: Vec<String>,
}

impl SubspaceEstimate {
    /// Variables with a non-zero coefficient in any dimension.
    pub fn support(&self) -> Vec<usize> {
        (0..self.basis.nrows())
            .filter(|&k| self.basis.row(k).iter().any(|v| *v != 0.0))
            .collect()
    }

    pub fn selected_mu(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.fit.mu).collect()
    }
}

fn oracle_select(fits: Vec<SparseFit>, truth: &DMatrix<f64>) -> Result<SparseFit> {
    let (q, rank) = orthonormal_basis(truth);
    if rank == 0 {
        return Err(SdrError::ZeroReference);
    }
    let mut best: Option<(f64, SparseFit)> = None;
    // fits arrive in ascending μ; walk down from the top so ties favour larger μ
    for fit in fits.into_iter().rev() {
        if fit.is_zero() {
            continue;
        }
        let proj = q.tr_mul(&fit.beta).norm_squared();
        let loss = 1.0 - proj / fit.beta.norm_squared();
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, fit));
        }
    }
    best.map(|(_, f)| f).ok_or(SdrError::AllZeroFits)
}

/// Cross-validated Lasso SIR fit for each of the first `cfg.d` SIR directions:
/// the initial estimate used by the banded path. Passing the result through
/// [`FitConfig::initial_estimate`] lets several fits on the same data share it.
pub fn banded_initial_estimate(data: &Dataset, cfg: &FitConfig) -> Result<Vec<DVector<f64>>> {
    let slices = assign_slices(data.y(), cfg.slices)?;
    let kernel = kernel_sir(data, &slices, cfg.d)?;
    (0..cfg.d)
        .map(|j| {
            let yt = pseudo_response(data, &slices, &kernel.eigen.vector(j), kernel.eigen.values[j], j)?;
            let seed = cfg.seed.wrapping_add(j as u64);
            cross_validate_lasso_sir(data, &yt, cfg.reference_folds, &default_grid(), seed, cfg.solve).map(|(f, _)| f.beta)
        })
        .collect()
}

/// Fits a `d`-dimensional basis, tuning each dimension separately.
pub fn fit_subspace(data: &Dataset, cfg: &FitConfig) -> Result<SubspaceEstimate> {
    cfg.estimator.validate()?;
    let tuning = cfg.effective_tuning();
    tuning.validate()?;
    if cfg.estimator == Estimator::LassoSir && cfg.method != Method::Sir {
        return Err(SdrError::InvalidConfig("Lasso SIR is only defined for the SIR kernel".into()));
    }
    if matches!(cfg.factor, CovarianceFactor::Banded { .. }) && cfg.method != Method::Sir {
        return Err(SdrError::InvalidConfig("the banded path needs the SIR kernel for its initial estimate".into()));
    }
    if matches!(tuning.kind, TuningKind::CrossValidation { .. }) && cfg.estimator != Estimator::LassoSir {
        return Err(SdrError::InvalidConfig("cross-validation tuning applies to Lasso SIR only".into()));
    }
    if tuning.kind == TuningKind::Oracle && cfg.oracle_truth.is_none() {
        return Err(SdrError::InvalidConfig("oracle tuning needs the true basis".into()));
    }

    let (n, p) = (data.n(), data.p());
    let slices = match cfg.method {
        Method::Sir | Method::Save => Some(assign_slices(data.y(), cfg.slices)?),
        Method::Phd => None,
    };
    let kernel = match cfg.method {
        Method::Sir => kernel_sir(data, slices.as_ref().expect("sliced"), cfg.d)?,
        Method::Save => kernel_save(data, slices.as_ref().expect("sliced"), cfg.d)?,
        Method::Phd => kernel_phd(data, cfg.d)?,
    };
    let mut warnings = Vec::new();
    let sigma = data.sample_covariance();

    let needs_factor = matches!(
        cfg.estimator,
        Estimator::Chomp | Estimator::AdaptiveChomp { .. } | Estimator::Unpenalized
    );
    let needs_reference =
        matches!(cfg.estimator, Estimator::AdaptiveChomp { .. }) || matches!(tuning.kind, TuningKind::Pic { .. });

    let sample_factor: Option<LowerTriangular> = match cfg.factor {
        CovarianceFactor::Dense if needs_factor || needs_reference => Some(cholesky(&sigma)?),
        _ => None,
    };
    let factor: Option<LowerTriangular> = match cfg.factor {
        CovarianceFactor::Dense => sample_factor.clone(),
        CovarianceFactor::Banded { bandwidth } if needs_factor => {
            let est = banded_cholesky(data, bandwidth)?;
            if !est.rank_deficient.is_empty() {
                warnings.push(format!(
                    "rank-deficient banded regressions at columns {:?}; minimum-norm solutions used",
                    est.rank_deficient
                ));
            }
            Some(est.l)
        }
        CovarianceFactor::Banded { .. } => None,
    };

    // Matrix Lasso has no fixed upper bound and adaptive weights shift the useful
    // range far below 1, so both grids follow the problem's zero threshold.
    let grid_for = |form: &QuadraticForm, weights: &[f64]| -> Vec<f64> {
        match (&tuning.grid, cfg.estimator) {
            (Some(g), _) => g.clone(),
            (None, Estimator::MatrixLasso | Estimator::AdaptiveChomp { .. }) => {
                let top = form.zero_threshold(weights);
                if top > 0.0 && top.is_finite() {
                    scaled_grid(top)
                } else {
                    default_grid()
                }
            }
            (None, _) => default_grid(),
        }
    };

    let mut dims = Vec::with_capacity(cfg.d);
    for j in 0..cfg.d {
        let eta = kernel.eigen.vector(j);
        let lambda = kernel.eigen.values[j];
        let dim_seed = cfg.seed.wrapping_add(j as u64);

        let ytilde = if cfg.method == Method::Sir
            && (cfg.estimator == Estimator::LassoSir
                || (needs_reference && matches!(cfg.factor, CovarianceFactor::Banded { .. })))
        {
            Some(pseudo_response(data, slices.as_ref().expect("sliced"), &eta, lambda, j)?)
        } else {
            None
        };

        let reference: Option<DVector<f64>> = if !needs_reference {
            None
        } else {
            match cfg.factor {
                CovarianceFactor::Dense => {
                    Some(unpenalized_from_factor(sample_factor.as_ref().expect("factor computed"), &eta)?)
                }
                CovarianceFactor::Banded { .. } => match &cfg.initial_estimate {
                    Some(given) => {
                        let b = given.get(j).ok_or(SdrError::DimensionMismatch { expected: cfg.d, found: given.len() })?;
                        if b.len() != p {
                            return Err(SdrError::DimensionMismatch { expected: p, found: b.len() });
                        }
                        Some(b.clone())
                    }
                    None => {
                        let yt = ytilde.as_ref().expect("pseudo-response computed");
                        let (fit, _) = cross_validate_lasso_sir(
                            data,
                            yt,
                            cfg.reference_folds,
                            &default_grid(),
                            dim_seed,
                            cfg.solve,
                        )?;
                        Some(fit.beta)
                    }
                },
            }
        };

        if cfg.estimator == Estimator::Unpenalized {
            let fit = unpenalized_fit(factor.as_ref().expect("factor computed"), &eta)?;
            dims.push(DimensionFit { fit, eigenvalue: lambda, pic: None, cv: None });
            continue;
        }

        let (form, weights) = match cfg.estimator {
            Estimator::Chomp => (chomp_form(factor.as_ref().expect("factor computed"), &eta)?, vec![1.0; p]),
            Estimator::AdaptiveChomp { gamma } => {
                let r = reference.as_ref().expect("reference computed");
                let source = match cfg.factor {
                    CovarianceFactor::Dense => "unpenalized",
                    CovarianceFactor::Banded { .. } => "cross-validated lasso sir",
                };
                let w = adaptive_weights_from(r, gamma, source);
                (chomp_form(factor.as_ref().expect("factor computed"), &eta)?, w.omega)
            }
            Estimator::MatrixLasso => (matrix_lasso_form(&sigma, &eta)?, vec![1.0; p]),
            Estimator::LassoSir => (lasso_sir_form(data, ytilde.as_ref().expect("pseudo-response computed"))?, vec![1.0; p]),
            Estimator::Unpenalized => unreachable!("handled above"),
        };

        let grid = grid_for(&form, &weights);
        let mut pic = None;
        let mut cv = None;
        let fit = match tuning.kind {
            TuningKind::Fixed { mu } => LassoSolver::new(&form, weights, cfg.solve)?.solve(mu)?,
            TuningKind::TheoreticalRate { m } => {
                let mu = theoretical_mu(m, p, n, lambda)?;
                LassoSolver::new(&form, weights, cfg.solve)?.solve(mu)?
            }
            TuningKind::Pic { tau } => {
                let tau = tau.unwrap_or_else(|| cfg.default_tau()).value(p);
                let r = reference.as_ref().expect("reference computed");
                let mut solver = LassoSolver::new(&form, weights, cfg.solve)?;
                let (fit, score) = select_pic(|mu| solver.solve(mu), r, &grid, tau)?;
                pic = Some(score);
                fit
            }
            TuningKind::CrossValidation { folds } => {
                let yt = ytilde.as_ref().expect("pseudo-response computed");
                let (fit, curve) = cross_validate_lasso_sir(data, yt, folds, &grid, dim_seed, cfg.solve)?;
                cv = Some(curve);
                fit
            }
            TuningKind::Oracle => {
                let truth = cfg.oracle_truth.as_ref().expect("checked above");
                if truth.nrows() != p {
                    return Err(SdrError::DimensionMismatch { expected: p, found: truth.nrows() });
                }
                let fits = super::lasso::fit_path(&form, weights, &grid, cfg.solve)?;
                oracle_select(fits, truth)?
            }
        };
        if !fit.converged {
            warnings.push(format!(
                "dimension {j}: solver stopped after {} sweeps with KKT residual {:e}",
                fit.iterations, fit.kkt_residual
            ));
        }
        dims.push(DimensionFit { fit, eigenvalue: lambda, pic, cv });
    }

    if dims.iter().all(|d| d.fit.is_zero()) {
        return Err(SdrError::AllDimensionsZero);
    }
    let mut basis = DMatrix::zeros(p, cfg.d);
    for (j, d) in dims.iter().enumerate() {
        basis.set_column(j, &d.fit.beta);
    }
    Ok(SubspaceEstimate { basis, dims, kernel, warnings })
}
