//! Dense linear-algebra kernels shared by the estimators.
//!
//! Cholesky factorization and the two triangular solves are written out by
//! hand; the symmetric eigendecomposition and the SVD used for rank checks
//! delegate to `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Result, SdrError};

/// Relative pivot tolerance for [`cholesky`], scaled by the largest diagonal entry.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Relative singular-value cutoff used when forming projections.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// A square symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps `m`, requiring exact symmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m, "symmetric matrix")?;
        let p = m.nrows();
        for i in 0..p {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return Err(SdrError::NotSymmetric);
                }
            }
        }
        Ok(SymmetricMatrix(m))
    }

    /// Wraps `m` after replacing it with `(m + mᵀ) / 2`.
    pub fn symmetrize(mut m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m, "symmetric matrix")?;
        let p = m.nrows();
        for i in 0..p {
            for j in 0..i {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Ok(SymmetricMatrix(m))
    }

    pub fn identity(p: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymmetricMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// A lower-triangular matrix (entries above the diagonal are exactly zero).
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(DMatrix<f64>);

impl LowerTriangular {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m, "triangular matrix")?;
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                if m[(i, j)] != 0.0 {
                    return Err(SdrError::NotLowerTriangular);
                }
            }
        }
        Ok(LowerTriangular(m))
    }

    pub fn identity(p: usize) -> Self {
        LowerTriangular(DMatrix::identity(p, p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let m = &self.0 * self.0.transpose();
        SymmetricMatrix::symmetrize(m).expect("product of finite factors is finite")
    }

    /// `L v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }
}

/// Eigenvalue ordering used by [`top_eigenpairs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenOrdering {
    DescendingValue,
    DescendingAbsValue,
}

/// The leading `d` eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// `p × d`, unit-norm columns.
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.vectors.column(j).into_owned()
    }
}

/// Cholesky factor `L` with `S = L Lᵀ`.
///
/// Fails with [`SdrError::NotPositiveDefinite`] as soon as a pivot drops to
/// `PIVOT_TOLERANCE × max diag(S)` or below.
pub fn cholesky(s: &SymmetricMatrix) -> Result<LowerTriangular> {
    let a = s.matrix();
    let p = a.nrows();
    let max_diag = (0..p).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let tol = PIVOT_TOLERANCE * max_diag;
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > tol) {
            return Err(SdrError::NotPositiveDefinite { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..p {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(LowerTriangular(l))
}

/// Forward substitution for `L x = b`.
pub fn solve_lower(l: &LowerTriangular, b: &DVector<f64>) -> Result<DVector<f64>> {
    let m = l.matrix();
    let p = m.nrows();
    if b.len() != p {
        return Err(SdrError::DimensionMismatch { expected: p, found: b.len() });
    }
    let mut x = DVector::<f64>::zeros(p);
    for i in 0..p {
        let d = m[(i, i)];
        if d == 0.0 {
            return Err(SdrError::SingularPivot(i));
        }
        let mut v = b[i];
        for k in 0..i {
            v -= m[(i, k)] * x[k];
        }
        x[i] = v / d;
    }
    Ok(x)
}

/// Back substitution for `Lᵀ x = b`, reading the upper triangle of `Lᵀ`
/// straight out of `L`.
pub fn solve_upper(l: &LowerTriangular, b: &DVector<f64>) -> Result<DVector<f64>> {
    let m = l.matrix();
    let p = m.nrows();
    if b.len() != p {
        return Err(SdrError::DimensionMismatch { expected: p, found: b.len() });
    }
    let mut x = DVector::<f64>::zeros(p);
    for i in (0..p).rev() {
        let d = m[(i, i)];
        if d == 0.0 {
            return Err(SdrError::SingularPivot(i));
        }
        let mut v = b[i];
        for k in (i + 1)..p {
            v -= m[(k, i)] * x[k];
        }
        x[i] = v / d;
    }
    Ok(x)
}

/// `S⁻¹ b` through the Cholesky factor of `S`.
pub fn spd_solve(s: &SymmetricMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    let l = cholesky(s)?;
    let kappa = solve_lower(&l, b)?;
    solve_upper(&l, &kappa)
}

/// The `d` leading eigenpairs of `s` under `ordering`.
///
/// Each eigenvector is sign-normalised so that its largest-magnitude entry is
/// positive (first such entry on ties).
pub fn top_eigenpairs(s: &SymmetricMatrix, d: usize, ordering: EigenOrdering) -> Result<EigenPairs> {
    let p = s.dim();
    if d == 0 || d > p {
        return Err(SdrError::DimensionError(format!("requested {d} eigenpairs of a {p}×{p} matrix")));
    }
    let eig = SymmetricEigen::new(s.matrix().clone());
    let mut order: Vec<usize> = (0..p).collect();
    let key = |i: usize| match ordering {
        EigenOrdering::DescendingValue => eig.eigenvalues[i],
        EigenOrdering::DescendingAbsValue => eig.eigenvalues[i].abs(),
    };
    // Stable sort keeps ties in nalgebra's output order.
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
    let mut vectors = DMatrix::<f64>::zeros(p, d);
    let mut values = Vec::with_capacity(d);
    for (col, &idx) in order.iter().take(d).enumerate() {
        values.push(eig.eigenvalues[idx]);
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let norm = v.norm();
        v /= norm;
        let mut best = 0;
        for k in 1..p {
            if v[k].abs() > v[best].abs() {
                best = k;
            }
        }
        if v[best] < 0.0 {
            v = -v;
        }
        vectors.set_column(col, &v);
    }
    Ok(EigenPairs { values, vectors })
}

/// Orthonormal basis for the column space of `b`, keeping singular directions
/// above `RANK_TOLERANCE × σ_max`. Returns `(basis, rank)`; a zero matrix has
/// rank 0 and an empty basis.
pub fn orthonormal_basis(b: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let p = b.nrows();
    if b.ncols() == 0 || b.iter().all(|&v| v == 0.0) {
        return (DMatrix::zeros(p, 0), 0);
    }
    let svd = SVD::new(b.clone(), true, false);
    let u = svd.u.expect("U requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_TOLERANCE * sigma_max)
        .collect();
    let mut basis = DMatrix::<f64>::zeros(p, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(i));
    }
    let rank = keep.len();
    (basis, rank)
}

/// `P(B) = B (BᵀB)⁻¹ Bᵀ` for a full-column-rank `B`.
pub fn projection(b: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    let (q, rank) = orthonormal_basis(b);
    if rank < b.ncols() {
        return Err(SdrError::RankDeficient { rank, cols: b.ncols() });
    }
    SymmetricMatrix::symmetrize(&q * q.transpose())
}

/// `‖P(Q₁) − P(Q₂)‖_F²` for orthonormal bases, without forming `p × p` matrices.
pub fn projection_distance_sq(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> f64 {
    let cross = q1.transpose() * q2;
    let v = q1.ncols() as f64 + q2.ncols() as f64 - 2.0 * cross.norm_squared();
    v.max(0.0)
}

/// `‖P(a) − P(b)‖_F²` for two non-zero vectors, i.e. `2 sin²θ`.
pub fn vector_projection_distance_sq(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let aa = a.norm_squared();
    let bb = b.norm_squared();
    let ab = a.dot(b);
    (2.0 - 2.0 * ab * ab / (aa * bb)).max(0.0)
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(SdrError::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(SdrError::DimensionError("empty matrix".into()));
    }
    Ok(())
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SdrError::NonFiniteInput(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(p: usize, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
        let g = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0_f64..1.0));
        SymmetricMatrix::symmetrize(&g * g.transpose() + DMatrix::identity(p, p)).unwrap()
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let l = cholesky(&SymmetricMatrix::identity(3)).unwrap();
        assert_eq!(l.matrix(), &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn cholesky_hand_checked_2x2() {
        let s = SymmetricMatrix::new(dmatrix![4.0, 2.0; 2.0, 5.0]).unwrap();
        let l = cholesky(&s).unwrap();
        assert_eq!(l.matrix(), &dmatrix![2.0, 0.0; 1.0, 2.0]);
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(6, &mut rng);
        let l = cholesky(&a).unwrap();
        let rel = (l.reconstruct().matrix() - a.matrix()).norm() / a.matrix().norm();
        assert!(rel < 1e-10, "relative error {rel}");
        for i in 0..6 {
            assert!(l.matrix()[(i, i)] > 0.0);
        }
    }

    #[test]
    fn cholesky_rejects_rank_deficient() {
        // sample covariance with p >= n is singular
        let x = dmatrix![1.0, 2.0, 3.0; -1.0, 0.5, 2.0];
        let s = SymmetricMatrix::symmetrize(x.transpose() * &x).unwrap();
        assert!(matches!(cholesky(&s), Err(SdrError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn triangular_solves_hand_checked() {
        let l = LowerTriangular::new(dmatrix![2.0, 0.0; 1.0, 2.0]).unwrap();
        assert_eq!(solve_lower(&l, &dvector![2.0, 3.0]).unwrap(), dvector![1.0, 1.0]);
        let id = LowerTriangular::identity(3);
        let b = dvector![0.3, -1.0, 2.0];
        assert_eq!(solve_lower(&id, &b).unwrap(), b);
        assert_eq!(solve_upper(&id, &b).unwrap(), b);
    }

    #[test]
    fn triangular_solve_residual_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(8, 8, |i, j| {
            if j > i {
                0.0
            } else if i == j {
                rng.random_range(0.5_f64..2.0)
            } else {
                rng.random_range(-1.0_f64..1.0)
            }
        });
        let l = LowerTriangular::new(m.clone()).unwrap();
        let b = DVector::from_fn(8, |_, _| rng.random_range(-1.0_f64..1.0));
        let x = solve_lower(&l, &b).unwrap();
        assert!(max_abs(&(&m * &x - &b)) < 1e-10 * max_abs(&b));
        let y = solve_upper(&l, &b).unwrap();
        assert!(max_abs(&(m.transpose() * &y - &b)) < 1e-10 * max_abs(&b));
    }

    #[test]
    fn two_solves_match_direct_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = random_spd(7, &mut rng);
        let eta = DVector::from_fn(7, |_, _| rng.random_range(-1.0_f64..1.0));
        let x = spd_solve(&s, &eta).unwrap();
        let direct = s.matrix().clone().lu().solve(&eta).unwrap();
        assert!((x - direct).amax() < 1e-10);
    }

    #[test]
    fn singular_pivot_is_an_error() {
        let l = LowerTriangular::new(dmatrix![1.0, 0.0; 1.0, 0.0]).unwrap();
        assert_eq!(solve_lower(&l, &dvector![1.0, 1.0]), Err(SdrError::SingularPivot(1)));
        assert_eq!(solve_upper(&l, &dvector![1.0, 1.0]), Err(SdrError::SingularPivot(1)));
        assert!(matches!(
            solve_lower(&l, &dvector![1.0]),
            Err(SdrError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn eigenpairs_of_diagonal() {
        let s = SymmetricMatrix::from_diagonal(&[3.0, 2.0, 1.0]);
        let e = top_eigenpairs(&s, 2, EigenOrdering::DescendingValue).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0]);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((e.vectors[(1, 1)] - 1.0).abs() < 1e-14);

        let s = SymmetricMatrix::from_diagonal(&[-5.0, 1.0]);
        let e = top_eigenpairs(&s, 1, EigenOrdering::DescendingAbsValue).unwrap();
        assert_eq!(e.values, vec![-5.0]);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-14);

        assert!(matches!(
            top_eigenpairs(&s, 3, EigenOrdering::DescendingValue),
            Err(SdrError::DimensionError(_))
        ));
    }

    #[test]
    fn eigen_residual_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0_f64..1.0));
        let s = SymmetricMatrix::symmetrize(&g + g.transpose()).unwrap();
        let e = top_eigenpairs(&s, 10, EigenOrdering::DescendingValue).unwrap();
        for j in 0..10 {
            let v = e.vector(j);
            assert!((s.matrix() * &v - &v * e.values[j]).amax() < 1e-8);
        }
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::<f64>::identity(10, 10)).amax() < 1e-8);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projection_basic_cases() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let p = projection(&e1).unwrap();
        assert!((p.matrix() - DMatrix::from_diagonal(&dvector![1.0, 0.0, 0.0])).amax() < 1e-15);

        let v = DMatrix::from_column_slice(3, 1, &[0.3, -1.0, 2.0]);
        let p1 = projection(&v).unwrap();
        let p2 = projection(&(&v * 2.0)).unwrap();
        assert!((p1.matrix() - p2.matrix()).amax() < 1e-12);

        let collinear = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(projection(&collinear), Err(SdrError::RankDeficient { rank: 1, cols: 2 })));
    }

    #[test]
    fn projection_idempotent_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0_f64..1.0));
        let p = projection(&b).unwrap();
        let m = p.matrix();
        assert!((m * m - m).amax() < 1e-10);
        assert!((m - m.transpose()).amax() == 0.0);
        assert!((m.trace() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn fast_projection_distance_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = DMatrix::from_fn(7, 2, |_, _| rng.random_range(-1.0_f64..1.0));
        let b = DMatrix::from_fn(7, 2, |_, _| rng.random_range(-1.0_f64..1.0));
        let dense = (projection(&a).unwrap().matrix() - projection(&b).unwrap().matrix()).norm_squared();
        let fast = projection_distance_sq(&orthonormal_basis(&a).0, &orthonormal_basis(&b).0);
        assert!((dense - fast).abs() < 1e-12);

        let u = a.column(0).into_owned();
        let v = b.column(0).into_owned();
        let dense = (projection(&DMatrix::from_column_slice(7, 1, u.as_slice())).unwrap().matrix()
            - projection(&DMatrix::from_column_slice(7, 1, v.as_slice())).unwrap().matrix())
        .norm_squared();
        assert!((dense - vector_projection_distance_sq(&u, &v)).abs() < 1e-12);
    }
}
