//! Data preparation, slicing and the method-specific kernel matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SdrError};
use crate::linalg::{top_eigenpairs, EigenOrdering, EigenPairs, SymmetricMatrix};

/// Centered (optionally standardized) predictors with their response.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    standardized: bool,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Dataset {
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Column means removed by [`prepare`].
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Column scale divisors (all 1 unless standardized).
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// `Σ̂ = n⁻¹ 𝒳ᵀ𝒳`.
    pub fn sample_covariance(&self) -> SymmetricMatrix {
        let n = self.n() as f64;
        SymmetricMatrix::symmetrize(self.x.tr_mul(&self.x) / n).expect("finite data")
    }
}

/// Centers each column of `x` and, if `standardize`, scales it to unit sample
/// variance (divisor `n − 1`).
pub fn prepare(x: DMatrix<f64>, y: DVector<f64>, standardize: bool) -> Result<Dataset> {
    let (n, p) = x.shape();
    if n < 2 || p < 1 {
        return Err(SdrError::DimensionError(format!("need n >= 2 and p >= 1, got {n}×{p}")));
    }
    if y.len() != n {
        return Err(SdrError::DimensionMismatch { expected: n, found: y.len() });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SdrError::NonFiniteInput("predictors"));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(SdrError::NonFiniteInput("response"));
    }
    let mut x = x;
    let mut means = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let mut col = x.column_mut(j);
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        means.push(mean);
        if standardize {
            let var = col.norm_squared() / (n - 1) as f64;
            if !(var > 0.0) {
                return Err(SdrError::ZeroVarianceColumn { column: j });
            }
            let sd = var.sqrt();
            col.unscale_mut(sd);
            scales.push(sd);
        } else {
            scales.push(1.0);
        }
    }
    Ok(Dataset { x, y, standardized: standardize, means, scales })
}

/// Partition of the observations into `H` slices by increasing response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceAssignment {
    /// Slice index (0-based) of each observation.
    pub membership: Vec<usize>,
    /// Observation count per slice.
    pub sizes: Vec<usize>,
}

impl SliceAssignment {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Observation indices grouped by slice.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.sizes.len()];
        for (i, &h) in self.membership.iter().enumerate() {
            out[h].push(i);
        }
        out
    }
}

/// Slices of size `⌊n/H⌋` or `⌈n/H⌉` (larger ones first) over a stable sort of `y`.
pub fn assign_slices(y: &DVector<f64>, slices: usize) -> Result<SliceAssignment> {
    let n = y.len();
    if slices == 0 || slices > n {
        return Err(SdrError::InvalidSliceCount { slices, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let base = n / slices;
    let extra = n % slices;
    let sizes: Vec<usize> = (0..slices).map(|h| base + usize::from(h < extra)).collect();
    let mut membership = vec![0; n];
    let mut pos = 0;
    for (h, &size) in sizes.iter().enumerate() {
        for &i in &order[pos..pos + size] {
            membership[i] = h;
        }
        pos += size;
    }
    Ok(SliceAssignment { membership, sizes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sir,
    Save,
    Phd,
}

impl Method {
    pub fn eigen_ordering(self) -> EigenOrdering {
        match self {
            Method::Sir | Method::Save => EigenOrdering::DescendingValue,
            Method::Phd => EigenOrdering::DescendingAbsValue,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Sir => "sir",
            Method::Save => "save",
            Method::Phd => "phd",
        }
    }
}

/// A kernel matrix `Q̂` together with its leading eigenpairs.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub method: Method,
    pub q: SymmetricMatrix,
    pub eigen: EigenPairs,
    /// Slice count, absent for pHd.
    pub slices: Option<usize>,
}

fn slice_means(data: &Dataset, slices: &SliceAssignment) -> Result<DMatrix<f64>> {
    let x = data.x();
    if slices.membership.len() != data.n() {
        return Err(SdrError::DimensionMismatch { expected: data.n(), found: slices.membership.len() });
    }
    let h_count = slices.count();
    let mut means = DMatrix::<f64>::zeros(h_count, data.p());
    for (h, &size) in slices.sizes.iter().enumerate() {
        if size == 0 {
            return Err(SdrError::EmptySlice(h));
        }
    }
    for (i, &h) in slices.membership.iter().enumerate() {
        let mut row = means.row_mut(h);
        row += x.row(i);
    }
    for (h, &size) in slices.sizes.iter().enumerate() {
        means.row_mut(h).unscale_mut(size as f64);
    }
    Ok(means)
}

/// SIR kernel `Λ̂ = H⁻¹ Σ_h x̄_h x̄_hᵀ`.
pub fn kernel_sir_matrix(data: &Dataset, slices: &SliceAssignment) -> Result<SymmetricMatrix> {
    let means = slice_means(data, slices)?;
    let h = slices.count() as f64;
    SymmetricMatrix::symmetrize(means.tr_mul(&means) / h)
}

/// SAVE kernel `H⁻¹ Σ_h (Σ̂ − V̂_h)²` with within-slice covariances `V̂_h`
/// (divisor `|J_h|`).
pub fn kernel_save_matrix(data: &Dataset, slices: &SliceAssignment) -> Result<SymmetricMatrix> {
    for (h, &size) in slices.sizes.iter().enumerate() {
        if size < 2 {
            return Err(SdrError::SliceTooSmall { slice: h, size, min: 2 });
        }
    }
    let means = slice_means(data, slices)?;
    let sigma = data.sample_covariance();
    let p = data.p();
    let mut q = DMatrix::<f64>::zeros(p, p);
    for (h, rows) in slices.members().iter().enumerate() {
        let mut block = DMatrix::<f64>::zeros(rows.len(), p);
        for (r, &i) in rows.iter().enumerate() {
            block.set_row(r, &(data.x().row(i) - means.row(h)));
        }
        let v_h = block.tr_mul(&block) / rows.len() as f64;
        let diff = sigma.matrix() - v_h;
        q += &diff * &diff;
    }
    SymmetricMatrix::symmetrize(q / slices.count() as f64)
}

/// pHd kernel `n⁻¹ Σ_i x_i x_iᵀ (y_i − ȳ)`.
pub fn kernel_phd_matrix(data: &Dataset) -> Result<SymmetricMatrix> {
    let n = data.n() as f64;
    let ybar = data.y().mean();
    let mut weighted = data.x().clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= data.y()[i] - ybar;
    }
    SymmetricMatrix::symmetrize(weighted.tr_mul(data.x()) / n)
}

pub fn kernel_sir(data: &Dataset, slices: &SliceAssignment, d: usize) -> Result<KernelEstimate> {
    let q = kernel_sir_matrix(data, slices)?;
    let eigen = top_eigenpairs(&q, d, Method::Sir.eigen_ordering())?;
    Ok(KernelEstimate { method: Method::Sir, q, eigen, slices: Some(slices.count()) })
}

pub fn kernel_save(data: &Dataset, slices: &SliceAssignment, d: usize) -> Result<KernelEstimate> {
    let q = kernel_save_matrix(data, slices)?;
    let eigen = top_eigenpairs(&q, d, Method::Save.eigen_ordering())?;
    Ok(KernelEstimate { method: Method::Save, q, eigen, slices: Some(slices.count()) })
}

pub fn kernel_phd(data: &Dataset, d: usize) -> Result<KernelEstimate> {
    let q = kernel_phd_matrix(data)?;
    let eigen = top_eigenpairs(&q, d, Method::Phd.eigen_ordering())?;
    Ok(KernelEstimate { method: Method::Phd, q, eigen, slices: None })
}

/// Kernel for `method`, slicing `y` into `slices` parts where applicable.
pub fn estimate_kernel(data: &Dataset, method: Method, slices: usize, d: usize) -> Result<KernelEstimate> {
    match method {
        Method::Sir => kernel_sir(data, &assign_slices(data.y(), slices)?, d),
        Method::Save => kernel_save(data, &assign_slices(data.y(), slices)?, d),
        Method::Phd => kernel_phd(data, d),
    }
}

/// The slice-constant pseudo-response for one SIR dimension.
#[derive(Debug, Clone)]
pub struct PseudoResponse {
    pub values: DVector<f64>,
    pub dimension: usize,
    pub eigenvalue: f64,
}

/// `ỹ_i = λ̂⁻¹ · mean_{i′ ∈ J_h} x_{i′}ᵀη̂` for `i ∈ J_h`.
pub fn pseudo_response(
    data: &Dataset,
    slices: &SliceAssignment,
    eta: &DVector<f64>,
    lambda: f64,
    dimension: usize,
) -> Result<PseudoResponse> {
    if !(lambda > 0.0) {
        return Err(SdrError::NonPositiveEigenvalue(lambda));
    }
    if eta.len() != data.p() {
        return Err(SdrError::DimensionMismatch { expected: data.p(), found: eta.len() });
    }
    let proj = data.x() * eta;
    let mut sums = vec![0.0; slices.count()];
    for (i, &h) in slices.membership.iter().enumerate() {
        sums[h] += proj[i];
    }
    let level: Vec<f64> = sums
        .iter()
        .zip(&slices.sizes)
        .map(|(s, &size)| s / size as f64 / lambda)
        .collect();
    let values = DVector::from_iterator(data.n(), slices.membership.iter().map(|&h| level[h]));
    Ok(PseudoResponse { values, dimension, eigenvalue: lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0_f64..2.0));
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 2.0 - x[(i, 1)].powi(3) + rng.random_range(-0.5_f64..0.5));
        prepare(x, y, false).unwrap()
    }

    #[test]
    fn prepare_centers_and_standardizes() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let d = prepare(x, dvector![0.0, 1.0, 2.0], false).unwrap();
        assert_eq!(d.x().column(0).as_slice(), &[-1.0, 0.0, 1.0]);

        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        assert_eq!(
            prepare(x, dvector![0.0, 1.0, 2.0], true).unwrap_err(),
            SdrError::ZeroVarianceColumn { column: 1 }
        );

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(20, 3, |_, j| rng.random_range(0.0_f64..(j + 1) as f64 * 3.0));
        let d = prepare(x, DVector::zeros(20), true).unwrap();
        for j in 0..3 {
            let col = d.x().column(j);
            assert!(col.mean().abs() < 1e-10);
            assert!((col.norm_squared() / 19.0 - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn slice_sizes_follow_rule() {
        let y = DVector::from_iterator(6, (0..6).map(|v| v as f64));
        assert_eq!(assign_slices(&y, 3).unwrap().sizes, vec![2, 2, 2]);
        let y = DVector::from_iterator(7, (0..7).map(|v| -(v as f64)));
        let s = assign_slices(&y, 3).unwrap();
        assert_eq!(s.sizes, vec![3, 2, 2]);
        // largest y values land in slice 0 because y is decreasing here
        assert_eq!(s.membership, vec![2, 2, 1, 1, 0, 0, 0]);
        assert!(assign_slices(&y, 0).is_err());
        assert!(assign_slices(&y, 8).is_err());
    }

    #[test]
    fn slicing_with_ties_is_stable() {
        let y = dvector![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 2.0];
        let a = assign_slices(&y, 3).unwrap();
        let b = assign_slices(&y, 3).unwrap();
        assert_eq!(a, b);
        // zeros first in index order, then ones in index order
        assert_eq!(a.membership, vec![1, 0, 1, 0, 2, 0, 2]);
    }

    #[test]
    fn sir_kernel_matches_direct_sum() {
        let data = random_data(12, 3, 4);
        let slices = assign_slices(data.y(), 3).unwrap();
        let q = kernel_sir_matrix(&data, &slices).unwrap();
        // brute force: loop over slices and rows explicitly
        let mut oracle = [[0.0f64; 3]; 3];
        for h in 0..3 {
            let mut mean = [0.0f64; 3];
            let mut count = 0.0;
            for i in 0..12 {
                if slices.membership[i] == h {
                    count += 1.0;
                    for k in 0..3 {
                        mean[k] += data.x()[(i, k)];
                    }
                }
            }
            for k in 0..3 {
                mean[k] /= count;
            }
            for a in 0..3 {
                for b in 0..3 {
                    oracle[a][b] += mean[a] * mean[b] / 3.0;
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                assert!((q.matrix()[(a, b)] - oracle[a][b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sir_kernel_with_one_slice_is_zero() {
        let data = random_data(10, 3, 2);
        let slices = assign_slices(data.y(), 1).unwrap();
        assert!(kernel_sir_matrix(&data, &slices).unwrap().matrix().amax() < 1e-14);
    }

    #[test]
    fn save_kernel_matches_direct_formula() {
        let data = random_data(12, 3, 9);
        let slices = assign_slices(data.y(), 3).unwrap();
        let q = kernel_save_matrix(&data, &slices).unwrap();
        let sigma = data.sample_covariance();
        let mut oracle = DMatrix::<f64>::zeros(3, 3);
        for h in 0..3 {
            let rows: Vec<usize> = (0..12).filter(|&i| slices.membership[i] == h).collect();
            let c = rows.len() as f64;
            let mean: Vec<f64> = (0..3).map(|k| rows.iter().map(|&i| data.x()[(i, k)]).sum::<f64>() / c).collect();
            let mut v = DMatrix::<f64>::zeros(3, 3);
            for &i in &rows {
                for a in 0..3 {
                    for b in 0..3 {
                        v[(a, b)] += (data.x()[(i, a)] - mean[a]) * (data.x()[(i, b)] - mean[b]) / c;
                    }
                }
            }
            let diff = sigma.matrix() - v;
            oracle += &diff * &diff / 3.0;
        }
        assert!((q.matrix() - oracle).amax() < 1e-12);

        let one = assign_slices(data.y(), 1).unwrap();
        assert!(kernel_save_matrix(&data, &one).unwrap().matrix().amax() < 1e-12);

        let tiny = assign_slices(data.y(), 12).unwrap();
        assert!(matches!(kernel_save_matrix(&data, &tiny), Err(SdrError::SliceTooSmall { .. })));
    }

    #[test]
    fn phd_kernel_matches_direct_formula() {
        let data = random_data(9, 3, 13);
        let q = kernel_phd_matrix(&data).unwrap();
        let ybar = data.y().iter().sum::<f64>() / 9.0;
        for a in 0..3 {
            for b in 0..3 {
                let direct: f64 = (0..9).map(|i| data.x()[(i, a)] * data.x()[(i, b)] * (data.y()[i] - ybar)).sum::<f64>() / 9.0;
                assert!((q.matrix()[(a, b)] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phd_kernel_vanishes_for_constant_or_balanced_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0_f64..1.0));
        let d = prepare(x.clone(), DVector::from_element(8, 3.0), false).unwrap();
        assert!(kernel_phd_matrix(&d).unwrap().matrix().amax() < 1e-15);

        // identical rows in the +1 and -1 groups
        let half = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0_f64..1.0));
        let x = DMatrix::from_fn(8, 2, |i, j| half[(i % 4, j)]);
        let y = DVector::from_fn(8, |i, _| if i < 4 { 1.0 } else { -1.0 });
        let d = prepare(x, y, false).unwrap();
        assert!(kernel_phd_matrix(&d).unwrap().matrix().amax() < 1e-15);
    }

    #[test]
    fn sir_and_save_kernels_are_psd() {
        for seed in 0..10 {
            let data = random_data(40, 4, 100 + seed);
            let slices = assign_slices(data.y(), 5).unwrap();
            for q in [kernel_sir_matrix(&data, &slices).unwrap(), kernel_save_matrix(&data, &slices).unwrap()] {
                let min = q.matrix().clone().symmetric_eigenvalues().min();
                assert!(min >= -1e-10, "min eigenvalue {min}");
            }
        }
    }

    #[test]
    fn pseudo_response_reconstructs_eigenvector() {
        let data = random_data(30, 4, 17);
        let slices = assign_slices(data.y(), 5).unwrap();
        let k = kernel_sir(&data, &slices, 2).unwrap();
        for j in 0..2 {
            let eta = k.eigen.vector(j);
            let yt = pseudo_response(&data, &slices, &eta, k.eigen.values[j], j).unwrap();
            let back = data.x().tr_mul(&yt.values) / 30.0;
            assert!((back - &eta).amax() < 1e-8);
        }
    }

    #[test]
    fn pseudo_response_edge_cases() {
        let data = random_data(7, 3, 23);
        let one = assign_slices(data.y(), 1).unwrap();
        let eta = dvector![1.0, 0.0, 0.0];
        let yt = pseudo_response(&data, &one, &eta, 0.5, 0).unwrap();
        assert!(yt.values.amax() < 1e-14);

        let three = assign_slices(data.y(), 3).unwrap();
        let yt = pseudo_response(&data, &three, &eta, 0.5, 0).unwrap();
        for rows in three.members() {
            let first = yt.values[rows[0]];
            assert!(rows.iter().all(|&i| (yt.values[i] - first).abs() <= 1e-12));
        }
        assert_eq!(
            pseudo_response(&data, &three, &eta, 0.0, 0).unwrap_err(),
            SdrError::NonPositiveEigenvalue(0.0)
        );
    }

    #[test]
    fn sir_kernel_invariant_to_row_order_within_slices() {
        let data = random_data(12, 3, 31);
        let slices = assign_slices(data.y(), 3).unwrap();
        let q = kernel_sir_matrix(&data, &slices).unwrap();
        let mut perm: Vec<usize> = (0..12).collect();
        perm.reverse();
        let x2 = DMatrix::from_fn(12, 3, |i, j| data.x()[(perm[i], j)]);
        let y2 = DVector::from_fn(12, |i, _| data.y()[perm[i]]);
        let d2 = prepare(x2, y2, false).unwrap();
        let s2 = assign_slices(d2.y(), 3).unwrap();
        let q2 = kernel_sir_matrix(&d2, &s2).unwrap();
        assert!((q.matrix() - q2.matrix()).amax() < 1e-12);
    }
}
