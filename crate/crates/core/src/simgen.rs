//! Seeded synthetic designs and the Monte Carlo replication harness.
//!
//! Every random stream is a `ChaCha8Rng` seeded from
//! `splitmix64(base_seed, replication, purpose)`, so a replication's data do not
//! depend on which thread runs it or on how many replications run alongside.
//! Normal deviates come from `rand_distr::StandardNormal` (ziggurat).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SdrError};
use crate::kernels::{prepare, Method};
use crate::linalg::{cholesky, SymmetricMatrix};
use crate::metrics::{evaluate, SelectionMode};
use crate::solvers::{banded_initial_estimate, fit_subspace, CovarianceFactor, Estimator, FitConfig};
use crate::tuning::{TuningKind, TuningPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovStructure {
    /// `ρ^{|i−j|}`
    Ar { rho: f64 },
    /// `ρ` off the diagonal.
    Homogeneous { rho: f64 },
    /// `1 − |j−k|/K` inside the band, zero outside.
    Banded { bandwidth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Unit,
    /// Diagonal entries drawn from `Unif(0.5, 2)`.
    RandomDiag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub structure: CovStructure,
    pub p: usize,
    pub scale: Scale,
}

/// The unit-diagonal correlation part `Ω̃`.
pub fn correlation_matrix(structure: CovStructure, p: usize) -> Result<DMatrix<f64>> {
    match structure {
        CovStructure::Ar { rho } | CovStructure::Homogeneous { rho } if !(rho.abs() < 1.0) => {
            Err(SdrError::InvalidConfig(format!("correlation must lie in (-1, 1), got {rho}")))
        }
        CovStructure::Banded { bandwidth: 0 } => Err(SdrError::InvalidConfig("bandwidth must be positive".into())),
        CovStructure::Ar { rho } => Ok(DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))),
        CovStructure::Homogeneous { rho } => Ok(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })),
        CovStructure::Banded { bandwidth } => {
            let k = bandwidth as f64;
            Ok(DMatrix::from_fn(p, p, |i, j| {
                let gap = i.abs_diff(j) as f64;
                if gap <= k {
                    1.0 - gap / k
                } else {
                    0.0
                }
            }))
        }
    }
}

/// `Σ = D Ω̃ D`.
pub fn gen_covariance(spec: &CovarianceSpec, seed: u64) -> Result<SymmetricMatrix> {
    let omega = correlation_matrix(spec.structure, spec.p)?;
    let diag: Vec<f64> = match spec.scale {
        Scale::Unit => vec![1.0; spec.p],
        Scale::RandomDiag => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..spec.p).map(|_| rng.random_range(0.5..2.0)).collect()
        }
    };
    SymmetricMatrix::symmetrize(DMatrix::from_fn(spec.p, spec.p, |i, j| diag[i] * omega[(i, j)] * diag[j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefPattern {
    /// One vector, first `s` entries non-zero.
    FirstS { s: usize },
    /// Two vectors: entries 1–5 and entries 4–7.
    Overlap,
}

impl CoefPattern {
    pub fn dims(self) -> usize {
        match self {
            CoefPattern::FirstS { .. } => 1,
            CoefPattern::Overlap => 2,
        }
    }

    fn supports(self) -> Vec<std::ops::Range<usize>> {
        match self {
            CoefPattern::FirstS { s } => vec![0..s],
            CoefPattern::Overlap => vec![0..5, 3..7],
        }
    }
}

/// Sparse coefficient vectors as columns of a `p × dims` matrix; non-zero
/// magnitudes are `Unif(1, 1.5)` with equiprobable signs.
pub fn gen_coefficients(pattern: CoefPattern, p: usize, seed: u64) -> Result<DMatrix<f64>> {
    let supports = pattern.supports();
    let needed = supports.iter().map(|r| r.end).max().unwrap_or(0);
    if needed > p || needed == 0 {
        return Err(SdrError::PatternTooWide { needed: needed.max(1), p });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = DMatrix::zeros(p, supports.len());
    for (j, range) in supports.into_iter().enumerate() {
        for k in range {
            let mag: f64 = rng.random_range(1.0..1.5);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            b[(k, j)] = sign * mag;
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl ModelId {
    pub fn dims(self) -> usize {
        match self {
            ModelId::IV | ModelId::VI => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::I => "I",
            ModelId::II => "II",
            ModelId::III => "III",
            ModelId::IV => "IV",
            ModelId::V => "V",
            ModelId::VI => "VI",
        }
    }
}

/// Applies the model formula to index values `u` (`n × dims`) and noise `eps`.
pub fn response_from_index(model: ModelId, u: &DMatrix<f64>, eps: &DVector<f64>) -> Result<DVector<f64>> {
    if u.ncols() != model.dims() {
        return Err(SdrError::DimsMismatch { expected: model.dims(), found: u.ncols() });
    }
    if eps.len() != u.nrows() {
        return Err(SdrError::DimensionMismatch { expected: u.nrows(), found: eps.len() });
    }
    Ok(DVector::from_fn(u.nrows(), |i, _| {
        let e = eps[i];
        let a = u[(i, 0)];
        match model {
            ModelId::I => a.sin() * a.exp() + e,
            ModelId::II => 0.5 * a.powi(3) + e,
            ModelId::III => (a + e).exp(),
            ModelId::IV => a * (u[(i, 1)].exp() + e),
            ModelId::V => a * a + e,
            ModelId::VI => a * a - u[(i, 1)].powi(4) + e,
        }
    }))
}

/// `y` for design `x` and coefficients `betas` (`p × dims`), with `N(0, 1)` noise from `seed`.
pub fn gen_response(model: ModelId, x: &DMatrix<f64>, betas: &DMatrix<f64>, seed: u64) -> Result<DVector<f64>> {
    if betas.ncols() != model.dims() {
        return Err(SdrError::DimsMismatch { expected: model.dims(), found: betas.ncols() });
    }
    if betas.nrows() != x.ncols() {
        return Err(SdrError::DimensionMismatch { expected: x.ncols(), found: betas.nrows() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = DVector::from_fn(x.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    response_from_index(model, &(x * betas), &eps)
}

/// `n` rows of `N(0, Σ)` as `Z·chol(Σ)ᵀ`.
pub fn gen_design(sigma: &SymmetricMatrix, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let l = cholesky(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = sigma.dim();
    // row-major draw order keeps each observation's deviates contiguous in the stream
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(z * l.matrix().transpose())
}

/// Named sub-streams of a replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Covariance = 1,
    Coefficients = 2,
    Design = 3,
    Noise = 4,
    Fit = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, rep: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ rep) ^ stream as u64)
}

/// One estimator to run in every replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub estimator: Estimator,
    pub method: Method,
    #[serde(default)]
    pub tuning: Option<TuningPolicy>,
    pub factor: CovarianceFactor,
}

impl EstimatorSpec {
    pub fn new(estimator: Estimator, method: Method) -> Self {
        EstimatorSpec { estimator, method, tuning: None, factor: CovarianceFactor::Dense }
    }

    pub fn label(&self) -> String {
        let mut s = format!("{}-{}", self.estimator.label(), self.method.name());
        if let Some(t) = &self.tuning {
            let kind = match t.kind {
                TuningKind::Pic { .. } => "pic",
                TuningKind::CrossValidation { .. } => "cv",
                TuningKind::Fixed { .. } => "fixed",
                TuningKind::TheoreticalRate { .. } => "rate",
                TuningKind::Oracle => "oracle",
            };
            s.push('-');
            s.push_str(kind);
        }
        if let CovarianceFactor::Banded { bandwidth } = self.factor {
            s.push_str(&format!("-band{bandwidth}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub model: ModelId,
    pub covariance: CovarianceSpec,
    pub pattern: CoefPattern,
    pub n: usize,
    pub slices: usize,
    pub d: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub reps: usize,
    pub seed: u64,
    /// Draw `D` and `β` once and reuse them in every replication.
    pub fix_across_reps: bool,
    pub standardize: bool,
}

impl Scenario {
    pub fn p(&self) -> usize {
        self.covariance.p
    }

    pub fn validate(&self) -> Result<()> {
        if self.pattern.dims() != self.model.dims() {
            return Err(SdrError::DimsMismatch { expected: self.model.dims(), found: self.pattern.dims() });
        }
        if self.d == 0 || self.d > self.p() {
            return Err(SdrError::InvalidConfig(format!("d = {} is out of range for p = {}", self.d, self.p())));
        }
        if self.n < 2 {
            return Err(SdrError::InvalidConfig("n must be at least 2".into()));
        }
        if self.slices == 0 || self.slices > self.n {
            return Err(SdrError::InvalidSliceCount { slices: self.slices, n: self.n });
        }
        if self.reps == 0 {
            return Err(SdrError::InvalidConfig("reps must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(SdrError::InvalidConfig("no estimators requested".into()));
        }
        correlation_matrix(self.covariance.structure, 1)?;
        for e in &self.estimators {
            if let Some(t) = &e.tuning {
                t.validate()?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the scenario's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Data for one replication.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub truth: DMatrix<f64>,
}

pub fn gen_replicate(s: &Scenario, rep: usize) -> Result<Replicate> {
    let fixed_rep = if s.fix_across_reps { 0 } else { rep as u64 };
    let sigma = gen_covariance(&s.covariance, derive_seed(s.seed, fixed_rep, Stream::Covariance))?;
    let truth = gen_coefficients(s.pattern, s.p(), derive_seed(s.seed, fixed_rep, Stream::Coefficients))?;
    let x = gen_design(&sigma, s.n, derive_seed(s.seed, rep as u64, Stream::Design))?;
    let y = gen_response(s.model, &x, &truth, derive_seed(s.seed, rep as u64, Stream::Noise))?;
    Ok(Replicate { x, y, truth })
}

/// Outcome of one estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub estimator: String,
    pub error: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub support: Vec<usize>,
    pub selected_mu: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub fits: Vec<FitRecord>,
    pub true_support: Vec<usize>,
}

pub fn run_replicate(s: &Scenario, rep: usize) -> RepRecord {
    let fail_all = |msg: String| RepRecord {
        rep,
        fits: s
            .estimators
            .iter()
            .map(|e| FitRecord {
                estimator: e.label(),
                error: None,
                fpr: None,
                fnr: None,
                support: Vec::new(),
                selected_mu: Vec::new(),
                failure: Some(msg.clone()),
            })
            .collect(),
        true_support: Vec::new(),
    };
    let data = match gen_replicate(s, rep).and_then(|r| {
        let truth = r.truth.clone();
        prepare(r.x, r.y, s.standardize).map(|d| (d, truth))
    }) {
        Ok(v) => v,
        Err(e) => return fail_all(e.to_string()),
    };
    let (data, truth) = data;
    let mode = SelectionMode::for_dims(s.model.dims());
    let true_support: Vec<usize> = (0..truth.nrows()).filter(|&k| truth.row(k).iter().any(|v| *v != 0.0)).collect();
    let fit_seed = derive_seed(s.seed, rep as u64, Stream::Fit);
    // every banded estimator starts from the same cross-validated Lasso SIR fit
    let mut initial: Option<std::result::Result<Vec<DVector<f64>>, String>> = None;
    let fits = s
        .estimators
        .iter()
        .map(|e| {
            let mut cfg = FitConfig::new(e.method, e.estimator, s.d, s.slices);
            cfg.seed = fit_seed;
            cfg.tuning = e.tuning.clone();
            cfg.factor = e.factor;
            let needs_initial = matches!(e.estimator, Estimator::AdaptiveChomp { .. })
                || matches!(cfg.effective_tuning().kind, TuningKind::Pic { .. });
            if needs_initial && matches!(e.factor, CovarianceFactor::Banded { .. }) && e.method == Method::Sir {
                let shared = initial
                    .get_or_insert_with(|| banded_initial_estimate(&data, &cfg).map_err(|err| err.to_string()));
                match shared {
                    Ok(v) => cfg.initial_estimate = Some(v.clone()),
                    Err(msg) => {
                        return FitRecord {
                            estimator: e.label(),
                            error: None,
                            fpr: None,
                            fnr: None,
                            support: Vec::new(),
                            selected_mu: Vec::new(),
                            failure: Some(msg.clone()),
                        }
                    }
                }
            }
            if matches!(e.tuning.as_ref().map(|t| t.kind), Some(TuningKind::Oracle)) {
                cfg.oracle_truth = Some(truth.clone());
            }
            match fit_subspace(&data, &cfg).and_then(|est| {
                evaluate(&est.basis, &truth, mode).map(|r| (r, est.support(), est.selected_mu()))
            }) {
                Ok((r, support, mu)) => FitRecord {
                    estimator: e.label(),
                    error: Some(r.error),
                    fpr: r.fpr,
                    fnr: r.fnr,
                    support,
                    selected_mu: mu,
                    failure: None,
                },
                Err(err) => FitRecord {
                    estimator: e.label(),
                    error: None,
                    fpr: None,
                    fnr: None,
                    support: Vec::new(),
                    selected_mu: Vec::new(),
                    failure: Some(err.to_string()),
                },
            }
        })
        .collect();
    RepRecord { rep, fits, true_support }
}

/// Summary row: mean and standard deviation of one metric for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub p: usize,
    pub estimator: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub version: String,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub metadata: TableMetadata,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

impl ResultTable {
    /// Aggregates replications in index order; metrics are `error`, `fpr`, `fnr`
    /// (over replications where they are defined) and `failed`.
    pub fn from_records(s: &Scenario, records: &[RepRecord]) -> Self {
        let mut rows = Vec::new();
        for (e_idx, spec) in s.estimators.iter().enumerate() {
            let label = spec.label();
            let pick = |f: &dyn Fn(&FitRecord) -> Option<f64>| -> Vec<f64> {
                records.iter().filter_map(|r| f(&r.fits[e_idx])).collect()
            };
            let metrics: [(&str, Vec<f64>); 3] = [
                ("error", pick(&|f| f.error)),
                ("fpr", pick(&|f| f.fpr)),
                ("fnr", pick(&|f| f.fnr)),
            ];
            for (name, vals) in metrics {
                let (mean, sd) = mean_sd(&vals);
                rows.push(ResultRow {
                    model: s.model.name().into(),
                    p: s.p(),
                    estimator: label.clone(),
                    metric: name.into(),
                    mean,
                    sd,
                    reps: vals.len(),
                    seed: s.seed,
                });
            }
            let failed = records.iter().filter(|r| r.fits[e_idx].failure.is_some()).count();
            rows.push(ResultRow {
                model: s.model.name().into(),
                p: s.p(),
                estimator: label,
                metric: "failed".into(),
                mean: failed as f64,
                sd: 0.0,
                reps: records.len(),
                seed: s.seed,
            });
        }
        ResultTable {
            rows,
            metadata: TableMetadata {
                scenario: s.name.clone(),
                scenario_hash: s.hash(),
                seed: s.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                reps: records.len(),
            },
        }
    }

    pub fn get(&self, estimator: &str, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.metric == metric)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r).map_err(|e| SdrError::Io(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, metadata: TableMetadata) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()
            .map_err(|e| SdrError::Parse(e.to_string()))?;
        Ok(ResultTable { rows, metadata })
    }

    /// Writes `path` and a `<path>.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let meta = serde_json::to_string_pretty(&self.metadata).map_err(|e| SdrError::Io(e.to_string()))?;
        std::fs::write(meta_path(path), meta + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta = std::fs::read_to_string(meta_path(path))?;
        let metadata: TableMetadata = serde_json::from_str(&meta).map_err(|e| SdrError::Parse(e.to_string()))?;
        Self::read_csv(std::fs::File::open(path)?, metadata)
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub records: Vec<RepRecord>,
    pub table: ResultTable,
}

/// Runs every replication, `threads` at a time (`None` = rayon default), and
/// calls `on_chunk` with all replications finished so far after each chunk.
pub fn run_replications_with(
    s: &Scenario,
    threads: Option<usize>,
    mut on_chunk: impl FnMut(&[RepRecord]),
) -> Result<SimulationResult> {
    s.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| SdrError::InvalidConfig(e.to_string()))?;
    let chunk = (pool.current_num_threads() * 4).max(8);
    let mut records: Vec<RepRecord> = Vec::with_capacity(s.reps);
    let mut start = 0;
    while start < s.reps {
        let end = (start + chunk).min(s.reps);
        let part: Vec<RepRecord> = pool.install(|| (start..end).into_par_iter().map(|r| run_replicate(s, r)).collect());
        records.extend(part);
        on_chunk(&records);
        start = end;
    }
    let table = ResultTable::from_records(s, &records);
    Ok(SimulationResult { records, table })
}

pub fn run_replications(s: &Scenario, threads: Option<usize>) -> Result<SimulationResult> {
    run_replications_with(s, threads, |_| {})
}
