//! Point estimators of the weighted average treatment effect.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{FittedOutcome, FittedPropensity};
use crate::scheme::WeightScheme;
use crate::weights::WeightSet;

/// Unadjusted difference in arm means.
pub fn crude_estimate(ds: &Dataset) -> f64 {
    let (mut s1, mut s0) = (0.0, 0.0);
    for (&z, &y) in ds.treatment().iter().zip(ds.outcome()) {
        if z == 1 {
            s1 += y;
        } else {
            s0 += y;
        }
    }
    s1 / ds.n_treated() as f64 - s0 / ds.n_control() as f64
}

fn check_weights(ws: &WeightSet) -> Result<()> {
    if !(ws.sum_w1 > 0.0) {
        return Err(Error::EmptyEffectiveArm { arm: 1 });
    }
    if !(ws.sum_w0 > 0.0) {
        return Err(Error::EmptyEffectiveArm { arm: 0 });
    }
    Ok(())
}

/// Weighted arm means (μ̂₁, μ̂₀) with normalized weights.
pub fn hajek_means(ws: &WeightSet, ds: &Dataset) -> Result<(f64, f64)> {
    check_weights(ws)?;
    let y = ds.outcome();
    let mu1 = ws.norm_w1.iter().zip(y).map(|(w, y)| w * y).sum();
    let mu0 = ws.norm_w0.iter().zip(y).map(|(w, y)| w * y).sum();
    Ok((mu1, mu0))
}

pub fn hajek_estimate(ws: &WeightSet, ds: &Dataset) -> Result<f64> {
    let (mu1, mu0) = hajek_means(ws, ds)?;
    Ok(mu1 - mu0)
}

/// IPW with stabilized weights P(Z=z)/P(Z=z|x). These weights average to
/// one within each arm, so each arm total is divided by its size.
pub fn stabilized_ipw_estimate(ds: &Dataset, fp: &FittedPropensity) -> Result<f64> {
    let n1 = ds.n_treated() as f64;
    let n0 = ds.n_control() as f64;
    let n = n1 + n0;
    let (p1, p0) = (n1 / n, n0 / n);
    let mut bad = Vec::new();
    let (mut t1, mut t0) = (0.0, 0.0);
    for (i, (&z, &y)) in ds.treatment().iter().zip(ds.outcome()).enumerate() {
        let e = fp.scores[i];
        let term = if z == 1 {
            p1 * y / e
        } else {
            p0 * y / (1.0 - e)
        };
        if !term.is_finite() {
            bad.push(i);
        }
        if z == 1 {
            t1 += term;
        } else {
            t0 += term;
        }
    }
    if !bad.is_empty() {
        return Err(Error::InfiniteWeight { rows: bad });
    }
    Ok(t1 / n1 - t0 / n0)
}

#[derive(Debug, Clone, Copy)]
pub struct AugmentedInputs<'a> {
    pub weightset: &'a WeightSet,
    pub outcome_fit: &'a FittedOutcome,
    pub scheme: WeightScheme,
    pub affine_ab: Option<(f64, f64)>,
}

impl<'a> AugmentedInputs<'a> {
    pub fn new(weightset: &'a WeightSet, outcome_fit: &'a FittedOutcome) -> Self {
        let scheme = weightset.scheme;
        Self {
            weightset,
            outcome_fit,
            scheme,
            affine_ab: scheme.affine_ab(),
        }
    }
}

/// Σ Z·W₁(Y−m₁) − Σ (1−Z)·W₀(Y−m₀): the weighted residual correction.
fn residual_correction(inputs: &AugmentedInputs<'_>, ds: &Dataset) -> Result<f64> {
    let ws = inputs.weightset;
    check_weights(ws)?;
    let of = inputs.outcome_fit;
    let y = ds.outcome();
    let mut total = 0.0;
    for (i, &z) in ds.treatment().iter().enumerate() {
        total += if z == 1 {
            ws.norm_w1[i] * (y[i] - of.fitted_m1[i])
        } else {
            -ws.norm_w0[i] * (y[i] - of.fitted_m0[i])
        };
    }
    Ok(total)
}

/// Residual-corrected estimator whose regression term is weighted by ĝ/Σĝ.
pub fn augmented_estimate(inputs: &AugmentedInputs<'_>, ds: &Dataset) -> Result<f64> {
    if let WeightScheme::Trunc { .. } = inputs.scheme {
        return Err(Error::UnsupportedScheme {
            scheme: inputs.scheme.to_string(),
            reason: "truncation has no single target density for the regression term",
        });
    }
    let correction = residual_correction(inputs, ds)?;
    let regression = regression_estimate(inputs.outcome_fit, &inputs.weightset.g_values)?;
    Ok(correction + regression)
}

/// Doubly robust form for g = a + b·e, with regression term weighted by
/// (a + b·Z)/Σ(a + b·Z).
pub fn dr_estimate(inputs: &AugmentedInputs<'_>, ds: &Dataset) -> Result<f64> {
    let (a, b) = inputs
        .affine_ab
        .ok_or_else(|| Error::SchemeNotAffine(inputs.scheme.to_string()))?;
    let correction = residual_correction(inputs, ds)?;
    let w3: Vec<f64> = ds
        .treatment()
        .iter()
        .map(|&z| a + b * f64::from(z))
        .collect();
    let regression = regression_estimate(inputs.outcome_fit, &w3)?;
    Ok(correction + regression)
}

/// Σ g(m̂₁ − m̂₀) / Σ g.
pub fn regression_estimate(outcome_fit: &FittedOutcome, g_values: &[f64]) -> Result<f64> {
    if g_values.len() != outcome_fit.fitted_m1.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} selection values for {} fitted units",
            g_values.len(),
            outcome_fit.fitted_m1.len()
        )));
    }
    let total: f64 = g_values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroSelection);
    }
    let num: f64 = g_values
        .iter()
        .zip(outcome_fit.fitted_m1.iter().zip(&outcome_fit.fitted_m0))
        .map(|(g, (m1, m0))| g * (m1 - m0))
        .sum();
    Ok(num / total)
}
