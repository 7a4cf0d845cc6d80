use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdrError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdrError {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dimension request: {0}")]
    DimensionError(String),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not lower triangular")]
    NotLowerTriangular,

    #[error("zero pivot on triangular diagonal at index {0}")]
    SingularPivot(usize),

    #[error("matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("column {column} has zero variance")]
    ZeroVarianceColumn { column: usize },

    #[error("invalid slice count {slices} for {n} observations")]
    InvalidSliceCount { slices: usize, n: usize },

    #[error("slice {0} is empty")]
    EmptySlice(usize),

    #[error("slice {slice} has {size} observations; at least {min} required")]
    SliceTooSmall { slice: usize, size: usize, min: usize },

    #[error("eigenvalue {0} is not positive")]
    NonPositiveEigenvalue(f64),

    #[error("coordinate descent did not converge after {iterations} sweeps (KKT residual {kkt_residual:e})")]
    NotConverged { iterations: usize, kkt_residual: f64 },

    #[error("reference vector for the projection criterion is zero")]
    ZeroReference,

    #[error("every tuning-grid point produced the zero vector")]
    AllZeroFits,

    #[error("every estimated dimension is the zero vector")]
    AllDimensionsZero,

    #[error("{folds} folds requested for {n} observations")]
    FoldTooSmall { folds: usize, n: usize },

    #[error("coefficient pattern needs p >= {needed}, got {p}")]
    PatternTooWide { needed: usize, p: usize },

    #[error("model expects {expected} coefficient vectors, got {found}")]
    DimsMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for SdrError {
    fn from(e: std::io::Error) -> Self {
        SdrError::Io(e.to_string())
    }
}
