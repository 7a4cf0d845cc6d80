//! Estimation error, selection rates and distance correlation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrError};
use crate::linalg::{orthonormal_basis, projection_distance_sq};

/// Diagonal entries of a projection above this count as selected.
pub const DIAGONAL_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    PerCoefficient,
    ProjectionDiagonal,
}

impl SelectionMode {
    /// Per-coefficient for single-index fits, projection-diagonal otherwise.
    pub fn for_dims(d: usize) -> Self {
        if d == 1 {
            SelectionMode::PerCoefficient
        } else {
            SelectionMode::ProjectionDiagonal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub error: f64,
    /// `None` when there are no true zeros.
    pub fpr: Option<f64>,
    /// `None` when there are no true non-zeros.
    pub fnr: Option<f64>,
    pub support_hat: Vec<usize>,
    pub support_true: Vec<usize>,
    /// Set when the estimate was entirely zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionError {
    pub value: f64,
    /// Columns of the estimate that were dropped as zero or collinear.
    pub dropped: usize,
    /// The estimate was identically zero.
    pub degenerate: bool,
}

/// `‖P(B̂) − P(B)‖_F`, dropping zero or collinear columns of `B̂`.
pub fn projection_error_detail(b_hat: &DMatrix<f64>, b_true: &DMatrix<f64>) -> Result<ProjectionError> {
    if b_hat.nrows() != b_true.nrows() {
        return Err(SdrError::DimensionMismatch { expected: b_true.nrows(), found: b_hat.nrows() });
    }
    let (qt, rt) = orthonormal_basis(b_true);
    let (qh, rh) = orthonormal_basis(b_hat);
    let value = projection_distance_sq(&qh, &qt).sqrt();
    let _ = rt;
    Ok(ProjectionError { value, dropped: b_hat.ncols() - rh, degenerate: rh == 0 })
}

pub fn projection_error(b_hat: &DMatrix<f64>, b_true: &DMatrix<f64>) -> Result<f64> {
    Ok(projection_error_detail(b_hat, b_true)?.value)
}

fn selected(b: &DMatrix<f64>, mode: SelectionMode) -> Vec<bool> {
    match mode {
        SelectionMode::PerCoefficient => (0..b.nrows()).map(|k| b.row(k).iter().any(|v| *v != 0.0)).collect(),
        SelectionMode::ProjectionDiagonal => {
            let (q, _) = orthonormal_basis(b);
            (0..b.nrows()).map(|k| q.row(k).norm_squared() > DIAGONAL_THRESHOLD).collect()
        }
    }
}

/// `(FPR, FNR)`; each is `None` when its denominator is zero.
pub fn selection_rates(
    b_hat: &DMatrix<f64>,
    b_true: &DMatrix<f64>,
    mode: SelectionMode,
) -> Result<(Option<f64>, Option<f64>)> {
    if b_hat.nrows() != b_true.nrows() {
        return Err(SdrError::DimensionMismatch { expected: b_true.nrows(), found: b_hat.nrows() });
    }
    let sh = selected(b_hat, mode);
    let st = selected(b_true, mode);
    let (mut fp, mut neg, mut fneg, mut pos) = (0usize, 0usize, 0usize, 0usize);
    for (h, t) in sh.iter().zip(&st) {
        if *t {
            pos += 1;
            if !h {
                fneg += 1;
            }
        } else {
            neg += 1;
            if *h {
                fp += 1;
            }
        }
    }
    let rate = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 / b as f64) };
    Ok((rate(fp, neg), rate(fneg, pos)))
}

pub fn evaluate(b_hat: &DMatrix<f64>, b_true: &DMatrix<f64>, mode: SelectionMode) -> Result<EvalReport> {
    let err = projection_error_detail(b_hat, b_true)?;
    let (fpr, fnr) = selection_rates(b_hat, b_true, mode)?;
    let idx = |s: Vec<bool>| s.iter().enumerate().filter(|(_, v)| **v).map(|(k, _)| k).collect();
    Ok(EvalReport {
        error: err.value,
        fpr,
        fnr,
        support_hat: idx(selected(b_hat, mode)),
        support_true: idx(selected(b_true, mode)),
        degenerate: err.degenerate,
    })
}

/// Row means and grand mean of a pairwise distance matrix, computed without storing it.
fn distance_margins<F: Fn(usize, usize) -> f64>(n: usize, dist: &F) -> (Vec<f64>, f64) {
    let mut rows = vec![0.0; n];
    for i in 0..n {
        for k in (i + 1)..n {
            let v = dist(i, k);
            rows[i] += v;
            rows[k] += v;
        }
    }
    let grand = rows.iter().sum::<f64>() / (n * n) as f64;
    for r in rows.iter_mut() {
        *r /= n as f64;
    }
    (rows, grand)
}

/// Sample distance correlation (biased `n⁻²` form) between the rows of `u` and `y`.
pub fn distance_correlation(u: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let n = u.nrows();
    if y.len() != n {
        return Err(SdrError::DimensionMismatch { expected: n, found: y.len() });
    }
    if n < 2 {
        return Err(SdrError::DimensionError(format!("distance correlation needs n >= 2, got {n}")));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| u.row(i).iter().copied().collect()).collect();
    let da = |i: usize, k: usize| -> f64 {
        rows[i].iter().zip(&rows[k]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let db = |i: usize, k: usize| (y[i] - y[k]).abs();
    let (ra, ga) = distance_margins(n, &da);
    let (rb, gb) = distance_margins(n, &db);
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            let a = if i == k { 0.0 } else { da(i, k) } - ra[i] - ra[k] + ga;
            let b = if i == k { 0.0 } else { db(i, k) } - rb[i] - rb[k] + gb;
            ab += a * b;
            aa += a * a;
            bb += b * b;
        }
    }
    let nn = (n * n) as f64;
    let (dcov2, va, vb) = (ab / nn, aa / nn, bb / nn);
    if va <= 0.0 || vb <= 0.0 {
        return Ok(0.0);
    }
    let r2 = (dcov2 / (va * vb).sqrt()).max(0.0);
    Ok(r2.sqrt().min(1.0))
}
