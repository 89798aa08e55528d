//! End-to-end analysis: fit the propensity (and outcome) model once, then
//! weight, estimate and attach a variance for each scheme.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::data::Dataset;
use crate::diagnostics::{effective_sample_size, variance_inflation};
use crate::error::{Error, Result};
use crate::estimators::{augmented_estimate, dr_estimate, hajek_estimate, AugmentedInputs};
use crate::glm::{
    fit_outcome_model, fit_propensity, DesignSpec, FittedOutcome, FittedPropensity, LogisticOptions,
};
use crate::par::Execution;
use crate::scheme::WeightScheme;
use crate::variance::{
    bootstrap_variance, sandwich_augmented, sandwich_hajek, RegressionWeighting,
};
use crate::weights::{compute_weightset, WeightSet};

/// Which point estimator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Normalized weighting estimator.
    #[default]
    Hajek,
    /// Residual-corrected estimator with regression term weighted by ĝ,
    /// for every scheme.
    Augmented,
    /// Doubly robust (a + bZ) regression weighting for the affine schemes,
    /// the ĝ-weighted augmented form otherwise.
    Dr,
}

impl EstimatorMode {
    pub fn needs_outcome_model(self) -> bool {
        self != EstimatorMode::Hajek
    }

    /// Regression weighting used for `scheme`, or `None` for Hájek.
    pub fn weighting(self, scheme: WeightScheme) -> Option<RegressionWeighting> {
        match self {
            EstimatorMode::Hajek => None,
            EstimatorMode::Augmented => Some(RegressionWeighting::Selection),
            EstimatorMode::Dr => Some(match scheme.affine_ab() {
                Some((a, b)) => RegressionWeighting::Affine { a, b },
                None => RegressionWeighting::Selection,
            }),
        }
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hajek" => Ok(EstimatorMode::Hajek),
            "augmented" | "aug" => Ok(EstimatorMode::Augmented),
            "dr" => Ok(EstimatorMode::Dr),
            other => Err(Error::Config(format!("unknown estimator mode `{other}`"))),
        }
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorMode::Hajek => "hajek",
            EstimatorMode::Augmented => "augmented",
            EstimatorMode::Dr => "dr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum VarianceMethod {
    Sandwich,
    Bootstrap { reps: usize, seed: u64 },
    None,
}

impl VarianceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            VarianceMethod::Sandwich => "sandwich",
            VarianceMethod::Bootstrap { .. } => "bootstrap",
            VarianceMethod::None => "none",
        }
    }
}

/// Point estimate of `scheme` given fitted nuisance models.
pub fn point_estimate(
    ds: &Dataset,
    ws: &WeightSet,
    of: Option<&FittedOutcome>,
    mode: EstimatorMode,
) -> Result<f64> {
    match (mode.weighting(ws.scheme), of) {
        (None, _) => hajek_estimate(ws, ds),
        (Some(_), None) => Err(Error::Config(
            "augmented estimation needs an outcome model".into(),
        )),
        (Some(RegressionWeighting::Selection), Some(of)) => {
            augmented_estimate(&AugmentedInputs::new(ws, of), ds)
        }
        (Some(RegressionWeighting::Affine { .. }), Some(of)) => {
            dr_estimate(&AugmentedInputs::new(ws, of), ds)
        }
    }
}

/// Sandwich standard error matching [`point_estimate`].
pub fn sandwich_se(
    ds: &Dataset,
    fp: &FittedPropensity,
    ws: &WeightSet,
    of: Option<&FittedOutcome>,
    mode: EstimatorMode,
) -> Result<f64> {
    let res = match (mode.weighting(ws.scheme), of) {
        (None, _) => sandwich_hajek(ds, fp, ws)?,
        (Some(w), Some(of)) => sandwich_augmented(ds, fp, of, ws, w)?,
        (Some(_), None) => {
            return Err(Error::Config(
                "augmented estimation needs an outcome model".into(),
            ))
        }
    };
    Ok(res.se)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub ps_design: DesignSpec,
    pub outcome_design: DesignSpec,
    pub schemes: Vec<WeightScheme>,
    pub mode: EstimatorMode,
    pub variance: VarianceMethod,
    pub logistic: LogisticOptions,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub scheme: WeightScheme,
    pub estimand_label: &'static str,
    pub estimator: EstimatorMode,
    pub point: f64,
    pub se: f64,
    pub variance_method: &'static str,
    pub ci95: (f64, f64),
    pub ess_treated: f64,
    pub ess_control: f64,
    pub variance_inflation: f64,
    pub n_used: usize,
    pub bootstrap_failed: Option<usize>,
    pub warnings: Vec<String>,
}

/// Ratio of largest to median positive within-arm weight that triggers an
/// extreme-weight warning.
pub const EXTREME_WEIGHT_RATIO: f64 = 50.0;

fn extreme_weight_warning(ws: &WeightSet, ds: &Dataset) -> Option<String> {
    let mut worst: Option<(f64, usize)> = None;
    for (z, w) in [(1u8, &ws.norm_w1), (0u8, &ws.norm_w0)] {
        let mut arm: Vec<(f64, usize)> = (0..ds.n_units())
            .filter(|&i| ds.treatment()[i] == z && w[i] > 0.0)
            .map(|i| (w[i], i))
            .collect();
        if arm.is_empty() {
            continue;
        }
        arm.sort_by(|a, b| a.0.total_cmp(&b.0));
        let median = arm[arm.len() / 2].0;
        let (top, row) = arm[arm.len() - 1];
        let ratio = top / median;
        if ratio > EXTREME_WEIGHT_RATIO && worst.is_none_or(|(r, _)| ratio > r) {
            worst = Some((ratio, row));
        }
    }
    worst.map(|(ratio, row)| format!("row {row} carries a weight {ratio:.1}x the arm median"))
}

/// Runs every scheme of `cfg` on `ds`.
pub fn analyze(ds: &Dataset, cfg: &AnalysisConfig) -> Result<Vec<EstimateReport>> {
    if cfg.schemes.is_empty() {
        return Err(Error::Config("no weighting scheme requested".into()));
    }
    let fp = fit_propensity(ds, &cfg.ps_design, cfg.logistic)?;
    let of = if cfg.mode.needs_outcome_model() {
        Some(fit_outcome_model(ds, &cfg.outcome_design)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        if cfg.variance == VarianceMethod::Sandwich && !scheme.is_smooth() {
            return Err(Error::UnsupportedScheme {
                scheme: scheme.to_string(),
                reason: "no sandwich for indicator-based weights; rerun with bootstrap variance",
            });
        }
        let ws = compute_weightset(ds, &fp, scheme)?;
        let point = point_estimate(ds, &ws, of.as_ref(), cfg.mode)?;
        let mut warnings: Vec<String> = extreme_weight_warning(&ws, ds).into_iter().collect();
        let (se, failed) = match cfg.variance {
            VarianceMethod::Sandwich => (sandwich_se(ds, &fp, &ws, of.as_ref(), cfg.mode)?, None),
            VarianceMethod::Bootstrap { reps, seed } => {
                let res = bootstrap_variance(
                    ds,
                    |d| single_estimate(d, cfg, scheme),
                    reps,
                    seed,
                    cfg.exec,
                )?;
                if res.n_failed > 0 {
                    warnings.push(format!(
                        "{} of {reps} bootstrap resamples failed",
                        res.n_failed
                    ));
                }
                (res.se, Some(res.n_failed))
            }
            VarianceMethod::None => (f64::NAN, None),
        };
        let ci95 = if se.is_finite() {
            (point - 1.96 * se, point + 1.96 * se)
        } else {
            (f64::NAN, f64::NAN)
        };
        let n_used = ws
            .norm_w1
            .iter()
            .zip(&ws.norm_w0)
            .filter(|(a, b)| **a > 0.0 || **b > 0.0)
            .count();
        out.push(EstimateReport {
            scheme,
            estimand_label: scheme.estimand_label(),
            estimator: cfg.mode,
            point,
            se,
            variance_method: cfg.variance.name(),
            ci95,
            ess_treated: effective_sample_size(&ws, ds, 1)?,
            ess_control: effective_sample_size(&ws, ds, 0)?,
            variance_inflation: variance_inflation(&ws, ds)?,
            n_used,
            bootstrap_failed: failed,
            warnings,
        });
    }
    Ok(out)
}

/// Full pipeline for one scheme, point estimate only. Used per resample.
pub fn single_estimate(ds: &Dataset, cfg: &AnalysisConfig, scheme: WeightScheme) -> Result<f64> {
    let fp = fit_propensity(ds, &cfg.ps_design, cfg.logistic)?;
    let of = if cfg.mode.needs_outcome_model() {
        Some(fit_outcome_model(ds, &cfg.outcome_design)?)
    } else {
        None
    };
    let ws = compute_weightset(ds, &fp, scheme)?;
    point_estimate(ds, &ws, of.as_ref(), cfg.mode)
}
