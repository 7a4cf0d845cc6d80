//! Sparse sufficient dimension reduction through Cholesky-factor penalization.
//!
//! The pipeline estimates a kernel matrix (SIR, SAVE or pHd), takes its leading
//! eigenvectors `η̂_j`, and recovers sparse directions `β_j` solving
//! `Σ̂β_j = η̂_j` with a (weighted) lasso on the Cholesky factor of `Σ̂`.
//!
//! ```no_run
//! use chomp_sdr::{kernels, solvers};
//! # fn run(x: nalgebra::DMatrix<f64>, y: nalgebra::DVector<f64>) -> chomp_sdr::Result<()> {
//! let data = kernels::prepare(x, y, true)?;
//! let cfg = solvers::FitConfig::new(kernels::Method::Sir, solvers::Estimator::AdaptiveChomp { gamma: 2.0 }, 1, 20);
//! let est = solvers::fit_subspace(&data, &cfg)?;
//! println!("selected {:?}", est.support());
//! # Ok(()) }
//! ```

pub mod error;
pub mod highdim;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod scenario;
pub mod simgen;
pub mod solvers;
pub mod tuning;

pub use error::{Result, SdrError};
