//! Banded modified-Cholesky factor of the covariance and the CHOMP pipeline
//! built on it.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Result, SdrError};
use crate::kernels::{Dataset, Method};
use crate::linalg::{LowerTriangular, RANK_TOLERANCE};
use crate::solvers::{fit_subspace, CovarianceFactor, Estimator, FitConfig, SubspaceEstimate};
use crate::tuning::TuningPolicy;

/// Floor on the innovation variances so the factor stays invertible.
pub const INNOVATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BandedCholeskyEstimate {
    /// Unit lower-triangular, zero outside the band.
    pub c: DMatrix<f64>,
    /// Innovation variances `d̂_jj`.
    pub dg: DVector<f64>,
    /// `Ĉ D̂^{1/2}`.
    pub l: LowerTriangular,
    pub bandwidth: usize,
    /// Columns whose within-band regression design was rank deficient and
    /// were solved by minimum-norm least squares.
    pub rank_deficient: Vec<usize>,
}

impl BandedCholeskyEstimate {
    /// `Ĉ D̂ Ĉᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let lm = self.l.matrix();
        lm * lm.transpose()
    }
}

/// Regress each column on the residuals of the previous `K` columns.
pub fn banded_cholesky(data: &Dataset, bandwidth: usize) -> Result<BandedCholeskyEstimate> {
    let (n, p) = (data.n(), data.p());
    if n <= bandwidth {
        return Err(SdrError::DimensionError(format!("bandwidth {bandwidth} needs more than {n} observations")));
    }
    let x = data.x();
    let nf = n as f64;
    let mut e = DMatrix::<f64>::zeros(n, p);
    let mut c = DMatrix::<f64>::identity(p, p);
    let mut dg = DVector::<f64>::zeros(p);
    let mut rank_deficient = Vec::new();
    for j in 0..p {
        let lo = j.saturating_sub(bandwidth);
        let xj = x.column(j).into_owned();
        let resid = if j == lo {
            xj
        } else {
            let z = e.columns(lo, j - lo).into_owned();
            let svd = SVD::new(z.clone(), true, true);
            let smax = svd.singular_values.max();
            let eps = RANK_TOLERANCE * smax;
            if svd.singular_values.iter().any(|s| *s <= eps) {
                rank_deficient.push(j);
            }
            let coef = if smax > 0.0 {
                svd.solve(&xj, eps).map_err(|e| SdrError::DimensionError(e.to_string()))?
            } else {
                DVector::zeros(j - lo)
            };
            for (k, v) in coef.iter().enumerate() {
                c[(j, lo + k)] = *v;
            }
            xj - z * coef
        };
        dg[j] = (resid.norm_squared() / nf).max(INNOVATION_FLOOR);
        e.set_column(j, &resid);
    }
    let mut l = c.clone();
    for j in 0..p {
        let s = dg[j].sqrt();
        l.column_mut(j).scale_mut(s);
    }
    Ok(BandedCholeskyEstimate { c, dg, l: LowerTriangular::new(l)?, bandwidth, rank_deficient })
}

/// SIR-based CHOMP or adaptive CHOMP with the banded factor in place of the
/// sample Cholesky factor.
pub fn chomp_highdim(
    data: &Dataset,
    bandwidth: usize,
    estimator: Estimator,
    d: usize,
    slices: usize,
    tuning: Option<TuningPolicy>,
    seed: u64,
) -> Result<SubspaceEstimate> {
    if !matches!(estimator, Estimator::Chomp | Estimator::AdaptiveChomp { .. }) {
        return Err(SdrError::InvalidConfig("the banded path supports CHOMP and adaptive CHOMP only".into()));
    }
    let mut cfg = FitConfig::new(Method::Sir, estimator, d, slices);
    cfg.factor = CovarianceFactor::Banded { bandwidth };
    cfg.seed = seed;
    if let Some(t) = tuning {
        cfg.tuning = Some(t);
    }
    fit_subspace(data, &cfg)
}
