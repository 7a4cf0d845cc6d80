use std::path::PathBuf;

use chomp_sdr::kernels::{prepare, Method};
use chomp_sdr::metrics::distance_correlation;
use chomp_sdr::solvers::{fit_subspace, CovarianceFactor, Estimator, FitConfig};
use chomp_sdr::tuning::{TauRule, TuningKind, TuningPolicy};
use chomp_sdr::SdrError;
use clap::{Args, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::data::{read_numeric, write_coefficients};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Chomp,
    AdaptiveChomp,
    MatrixLasso,
    LassoSir,
    Unpenalized,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Sir,
    Save,
    Phd,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Input CSV with a header row; every column except the response is a predictor.
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub response_col: String,
    /// Number of directions to estimate.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Number of slices.
    #[arg(long = "H", default_value_t = 10)]
    pub slices: usize,
    #[arg(long, value_enum, default_value = "adaptive-chomp")]
    pub estimator: EstimatorArg,
    /// Exponent of the adaptive weights.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "sir")]
    pub method: MethodArg,
    /// `pic`, `pic:<tau>`, `pic:two_over_p`, `cv`, `cv:<folds>`, `fixed:<mu>` or
    /// `theoretical:<M>`; the estimator's default when omitted.
    #[arg(long)]
    pub tuning: Option<String>,
    /// Scale predictors to unit variance before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Use a banded Cholesky factor with this bandwidth (SIR only).
    #[arg(long)]
    pub bandwidth: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving `coefficients.csv` and `report.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn parse_tuning(s: &str) -> Result<TuningPolicy, CliError> {
    let bad = || CliError::Config(format!("unrecognised --tuning value '{s}'"));
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    let num = |a: &str| a.parse::<f64>().map_err(|_| bad());
    let policy = match (kind, arg) {
        ("pic", None) => TuningPolicy::pic(),
        ("pic", Some(a)) => {
            let tau = match a {
                "log_p_over_p" => TauRule::LogPOverP,
                "two_over_p" => TauRule::TwoOverP,
                v => TauRule::Custom(num(v)?),
            };
            TuningPolicy { kind: TuningKind::Pic { tau: Some(tau) }, grid: None }
        }
        ("cv", None) => TuningPolicy::cross_validation(10),
        ("cv", Some(a)) => TuningPolicy::cross_validation(a.parse().map_err(|_| bad())?),
        ("fixed", Some(a)) => TuningPolicy::fixed(num(a)?),
        ("theoretical", Some(a)) => TuningPolicy::theoretical(num(a)?),
        ("theoretical", None) => TuningPolicy::theoretical(1.0),
        _ => return Err(bad()),
    };
    policy.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(policy)
}

pub fn run(a: &FitArgs) -> Result<Vec<PathBuf>, CliError> {
    let table = read_numeric(&a.data)?;
    let ycol = table
        .headers
        .iter()
        .position(|h| *h == a.response_col)
        .ok_or_else(|| CliError::Csv(format!("response column '{}' not found", a.response_col)))?;
    let names: Vec<String> =
        table.headers.iter().enumerate().filter(|(j, _)| *j != ycol).map(|(_, h)| h.clone()).collect();
    if names.is_empty() {
        return Err(CliError::Csv("no predictor columns".into()));
    }
    let n = table.values.nrows();
    let y = table.values.column(ycol).into_owned();
    let x = DMatrix::from_fn(n, names.len(), |i, j| table.values[(i, if j < ycol { j } else { j + 1 })]);
    for (j, name) in names.iter().enumerate() {
        let c = x.column(j);
        if c.iter().all(|v| *v == c[0]) {
            return Err(CliError::Other(format!("predictor '{name}' has zero variance")));
        }
    }
    let data = prepare(x, y, a.standardize).map_err(|e| match e {
        SdrError::ZeroVarianceColumn { column } => CliError::Other(format!("predictor '{}' has zero variance", names[column])),
        other => other.into(),
    })?;

    let estimator = match a.estimator {
        EstimatorArg::Chomp => Estimator::Chomp,
        EstimatorArg::AdaptiveChomp => Estimator::AdaptiveChomp { gamma: a.gamma },
        EstimatorArg::MatrixLasso => Estimator::MatrixLasso,
        EstimatorArg::LassoSir => Estimator::LassoSir,
        EstimatorArg::Unpenalized => Estimator::Unpenalized,
    };
    let method = match a.method {
        MethodArg::Sir => Method::Sir,
        MethodArg::Save => Method::Save,
        MethodArg::Phd => Method::Phd,
    };
    let mut cfg = FitConfig::new(method, estimator, a.d, a.slices);
    cfg.seed = a.seed;
    cfg.tuning = a.tuning.as_deref().map(parse_tuning).transpose()?;
    if let Some(k) = a.bandwidth {
        cfg.factor = CovarianceFactor::Banded { bandwidth: k };
    }
    if a.d == 0 || a.d > names.len() {
        return Err(CliError::Dimension(format!("--d {} is out of range for {} predictors", a.d, names.len())));
    }
    let est = fit_subspace(&data, &cfg).map_err(|e| match e {
        SdrError::InvalidConfig(_) | SdrError::InvalidSliceCount { .. } | SdrError::FoldTooSmall { .. } => {
            CliError::Config(e.to_string())
        }
        other => other.into(),
    })?;

    let scores = data.x() * &est.basis;
    let dcor = distance_correlation(&scores, &DVector::from_column_slice(data.y().as_slice()))?;
    let support = est.support();
    let dims: Vec<_> = est
        .dims
        .iter()
        .enumerate()
        .map(|(j, df)| {
            json!({
                "direction": j + 1,
                "support_size": df.fit.support.len(),
                "selected_mu": df.fit.mu,
                "eigenvalue": df.eigenvalue,
                "pic": df.pic.map(|p| p.total),
                "cv_folds": df.cv.as_ref().map(|c| c.folds),
                "converged": df.fit.converged,
            })
        })
        .collect();
    let report = json!({
        "estimator": estimator.label(),
        "method": format!("{method:?}").to_lowercase(),
        "n": n,
        "p": names.len(),
        "d": a.d,
        "slices": a.slices,
        "standardized": a.standardize,
        "seed": a.seed,
        "support_sizes": est.dims.iter().map(|df| df.fit.support.len()).collect::<Vec<_>>(),
        "selected_mu": est.selected_mu(),
        "distance_correlation": dcor,
        "selected_count": support.len(),
        "selected_variables": support.iter().map(|&k| names[k].clone()).collect::<Vec<_>>(),
        "dimensions": dims,
        "warnings": est.warnings,
    });

    std::fs::create_dir_all(&a.out_dir)?;
    let coef_path = a.out_dir.join("coefficients.csv");
    write_coefficients(&coef_path, &names, &est.basis)?;
    let report_path = a.out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(&report_path, text + "\n")?;
    Ok(vec![coef_path, report_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuning_strings() {
        assert!(matches!(parse_tuning("pic").unwrap().kind, TuningKind::Pic { tau: None }));
        assert!(matches!(parse_tuning("pic:two_over_p").unwrap().kind, TuningKind::Pic { tau: Some(TauRule::TwoOverP) }));
        assert!(matches!(parse_tuning("cv:5").unwrap().kind, TuningKind::CrossValidation { folds: 5 }));
        assert!(matches!(parse_tuning("fixed:0.1").unwrap().kind, TuningKind::Fixed { .. }));
        assert_eq!(parse_tuning("bogus").unwrap_err().exit_code(), 2);
        assert_eq!(parse_tuning("fixed").unwrap_err().exit_code(), 2);
    }
}
