//! JSON scenario files for the simulation harness.
//!
//! ```json
//! {
//!   "name": "modelII-ar",
//!   "model": "II",
//!   "covariance": { "structure": "ar", "scale": "random_diag" },
//!   "n": 1000, "p": 100, "pattern": "first5", "H": 20, "d": 1,
//!   "estimators": [
//!     { "name": "adaptive_chomp", "gamma": 2, "tuning": { "kind": "pic" } },
//!     { "name": "lasso_sir", "tuning": { "kind": "cv", "folds": 10 } }
//!   ],
//!   "reps": 100, "seed": 1, "output": "results.csv"
//! }
//! ```
//!
//! Unknown keys anywhere are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrError};
use crate::kernels::Method;
use crate::simgen::{CoefPattern, CovStructure, CovarianceSpec, EstimatorSpec, ModelId, Scale, Scenario};
use crate::solvers::{CovarianceFactor, Estimator};
use crate::tuning::{TauRule, TuningKind, TuningPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureName {
    Ar,
    Homogeneous,
    Banded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceConfig {
    pub structure: StructureName,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_scale")]
    pub scale: Scale,
}

fn default_scale() -> Scale {
    Scale::RandomDiag
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternName {
    First5,
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningKindName {
    Pic,
    Cv,
    Fixed,
    Theoretical,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRuleName {
    LogPOverP,
    TwoOverP,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    pub kind: TuningKindName,
    #[serde(default)]
    pub tau_rule: Option<TauRuleName>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub folds: Option<usize>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(rename = "M", default)]
    pub m: Option<f64>,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
}

impl TuningConfig {
    pub fn to_policy(&self) -> Result<TuningPolicy> {
        let kind = match self.kind {
            TuningKindName::Pic => {
                let tau = match (self.tau_rule, self.tau) {
                    (None, None) => None,
                    (None, Some(t)) | (Some(TauRuleName::Custom), Some(t)) => Some(TauRule::Custom(t)),
                    (Some(TauRuleName::Custom), None) => {
                        return Err(SdrError::InvalidConfig("tau_rule \"custom\" needs a \"tau\" value".into()))
                    }
                    (Some(TauRuleName::LogPOverP), None) => Some(TauRule::LogPOverP),
                    (Some(TauRuleName::TwoOverP), None) => Some(TauRule::TwoOverP),
                    (Some(_), Some(_)) => {
                        return Err(SdrError::InvalidConfig("\"tau\" is only valid with tau_rule \"custom\"".into()))
                    }
                };
                TuningKind::Pic { tau }
            }
            TuningKindName::Cv => TuningKind::CrossValidation { folds: self.folds.unwrap_or(10) },
            TuningKindName::Fixed => TuningKind::Fixed {
                mu: self.mu.ok_or_else(|| SdrError::InvalidConfig("fixed tuning needs \"mu\"".into()))?,
            },
            TuningKindName::Theoretical => TuningKind::TheoreticalRate { m: self.m.unwrap_or(1.0) },
            TuningKindName::Oracle => TuningKind::Oracle,
        };
        let policy = TuningPolicy { kind, grid: self.grid.clone() };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    Chomp,
    AdaptiveChomp,
    MatrixLasso,
    LassoSir,
    Unpenalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub name: EstimatorName,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub tuning: Option<TuningConfig>,
    /// Use the banded Cholesky factor with this bandwidth.
    #[serde(default)]
    pub bandwidth: Option<usize>,
}

impl EstimatorConfig {
    pub fn to_spec(&self) -> Result<EstimatorSpec> {
        let estimator = match self.name {
            EstimatorName::Chomp => Estimator::Chomp,
            EstimatorName::AdaptiveChomp => Estimator::AdaptiveChomp { gamma: self.gamma.unwrap_or(1.0) },
            EstimatorName::MatrixLasso => Estimator::MatrixLasso,
            EstimatorName::LassoSir => Estimator::LassoSir,
            EstimatorName::Unpenalized => Estimator::Unpenalized,
        };
        if self.gamma.is_some() && self.name != EstimatorName::AdaptiveChomp {
            return Err(SdrError::InvalidConfig("\"gamma\" applies to adaptive_chomp only".into()));
        }
        estimator.validate()?;
        let tuning = self.tuning.as_ref().map(|t| t.to_policy()).transpose()?;
        let factor = match self.bandwidth {
            Some(bandwidth) => CovarianceFactor::Banded { bandwidth },
            None => CovarianceFactor::Dense,
        };
        Ok(EstimatorSpec { estimator, method: self.method.unwrap_or(Method::Sir), tuning, factor })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelId,
    pub covariance: CovarianceConfig,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub pattern: Option<PatternName>,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(default)]
    pub d: Option<usize>,
    pub estimators: Vec<EstimatorConfig>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub fix_across_reps: bool,
    #[serde(default)]
    pub standardize: bool,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SdrError::InvalidConfig(e.to_string()))
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let structure = match self.covariance.structure {
            StructureName::Ar => CovStructure::Ar { rho: self.covariance.rho.unwrap_or(0.5) },
            StructureName::Homogeneous => CovStructure::Homogeneous { rho: self.covariance.rho.unwrap_or(0.5) },
            StructureName::Banded => CovStructure::Banded {
                bandwidth: self
                    .covariance
                    .k
                    .ok_or_else(|| SdrError::InvalidConfig("covariance.K is required for the banded structure".into()))?,
            },
        };
        if self.covariance.k.is_some() && self.covariance.structure != StructureName::Banded {
            return Err(SdrError::InvalidConfig("covariance.K applies to the banded structure only".into()));
        }
        let pattern = match self.pattern {
            Some(PatternName::First5) => CoefPattern::FirstS { s: 5 },
            Some(PatternName::Overlap) => CoefPattern::Overlap,
            None if self.model.dims() == 2 => CoefPattern::Overlap,
            None => CoefPattern::FirstS { s: 5 },
        };
        let estimators = self
            .estimators
            .iter()
            .enumerate()
            .map(|(i, e)| e.to_spec().map_err(|err| SdrError::InvalidConfig(format!("estimators[{i}]: {err}"))))
            .collect::<Result<Vec<_>>>()?;
        let s = Scenario {
            name: self.name.clone().unwrap_or_else(|| format!("model{}", self.model.name())),
            model: self.model,
            covariance: CovarianceSpec { structure, p: self.p, scale: self.covariance.scale },
            pattern,
            n: self.n,
            slices: self.h,
            d: self.d.unwrap_or(self.model.dims()),
            estimators,
            reps: self.reps,
            seed: self.seed,
            fix_across_reps: self.fix_across_reps,
            standardize: self.standardize,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<(Scenario, ScenarioConfig)> {
    let cfg = ScenarioConfig::from_json(text)?;
    let s = cfg.to_scenario()?;
    Ok((s, cfg))
}
