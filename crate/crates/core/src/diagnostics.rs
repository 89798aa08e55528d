//! Efficiency, balance and overlap diagnostics.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::FittedPropensity;
use crate::weights::WeightSet;

fn arm_weights(ws: &WeightSet, ds: &Dataset, z: u8) -> Vec<f64> {
    let w = if z == 1 { &ws.norm_w1 } else { &ws.norm_w0 };
    ds.treatment()
        .iter()
        .zip(w)
        .filter(|(&t, _)| t == z)
        .map(|(_, &w)| w)
        .collect()
}

/// (ΣW)²/ΣW² over the units of arm `z`.
pub fn effective_sample_size(ws: &WeightSet, ds: &Dataset, z: u8) -> Result<f64> {
    let w = arm_weights(ws, ds, z);
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    if !(s > 0.0) || !(s2 > 0.0) {
        return Err(Error::EmptyEffectiveArm { arm: z });
    }
    Ok(s * s / s2)
}

/// Kish design effect: (1/N₁ + 1/N₀)⁻¹ Σ_z ΣW_z²/(ΣW_z)².
pub fn variance_inflation(ws: &WeightSet, ds: &Dataset) -> Result<f64> {
    let n1 = ds.n_treated() as f64;
    let n0 = ds.n_control() as f64;
    let mut total = 0.0;
    for z in [1u8, 0u8] {
        total += 1.0 / effective_sample_size(ws, ds, z)?;
    }
    Ok(total / (1.0 / n1 + 1.0 / n0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRow {
    pub name: String,
    pub smd_unweighted: f64,
    pub smd_weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceTable {
    pub scheme: String,
    pub rows: Vec<BalanceRow>,
}

fn mean_var(x: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = x.clone().count() as f64;
    let mean = x.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        x.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Standardized mean differences of every covariate column. The
/// denominator is √((s₁² + s₀²)/2) from the unweighted arms, the same for
/// every scheme.
pub fn weighted_smd(ds: &Dataset, ws: &WeightSet) -> Result<BalanceTable> {
    let z = ds.treatment();
    let x = ds.covariates();
    let mut rows = Vec::with_capacity(x.ncols());
    for (j, name) in ds.covariate_names().iter().enumerate() {
        let col = x.column(j);
        let arm = |t: u8| {
            col.iter()
                .zip(z)
                .filter(move |(_, &zz)| zz == t)
                .map(|(&v, _)| v)
        };
        let (m1, v1) = mean_var(arm(1));
        let (m0, v0) = mean_var(arm(0));
        let sd = ((v1 + v0) / 2.0).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(name.clone()));
        }
        let wm1: f64 = col.iter().zip(&ws.norm_w1).map(|(v, w)| v * w).sum();
        let wm0: f64 = col.iter().zip(&ws.norm_w0).map(|(v, w)| v * w).sum();
        rows.push(BalanceRow {
            name: name.clone(),
            smd_unweighted: (m1 - m0) / sd,
            smd_weighted: (wm1 - wm0) / sd,
        });
    }
    Ok(BalanceTable {
        scheme: ws.scheme.to_string(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SixNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SixNumber {
    pub fn of(values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquipoiseLean {
    #[serde(rename = "ATT-like")]
    AttLike,
    #[serde(rename = "ATC-like")]
    AtcLike,
    #[serde(rename = "balanced")]
    Balanced,
}

impl std::fmt::Display for EquipoiseLean {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EquipoiseLean::AttLike => "ATT-like",
            EquipoiseLean::AtcLike => "ATC-like",
            EquipoiseLean::Balanced => "balanced",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapSummary {
    pub treated: SixNumber,
    pub control: SixNumber,
    pub prevalence: f64,
    pub variance_ratio: f64,
    pub equipoise_lean: EquipoiseLean,
    /// Set when prevalence and variance ratio point in opposite directions.
    pub note: Option<String>,
}

/// Prevalence band outside of which the equipoise estimands drift towards
/// ATT or ATC.
pub const PREVALENCE_BAND: (f64, f64) = (0.2, 0.8);

/// Prevalence is compared at two decimals: 0.2049 counts as 0.20.
pub const PREVALENCE_TOL: f64 = 0.005;

/// Lean of the equipoise estimands given prevalence `p` and variance ratio
/// `r`. Prevalence outside the band decides on its own; inside the band the
/// variance ratio decides against Rubin's bounds.
pub fn equipoise_lean(
    p: f64,
    r: f64,
    rubin_lo: f64,
    rubin_hi: f64,
) -> (EquipoiseLean, Option<String>) {
    let by_p = if p < PREVALENCE_BAND.0 + PREVALENCE_TOL {
        Some(EquipoiseLean::AttLike)
    } else if p > PREVALENCE_BAND.1 - PREVALENCE_TOL {
        Some(EquipoiseLean::AtcLike)
    } else {
        None
    };
    let by_r = if r > rubin_hi {
        Some(EquipoiseLean::AtcLike)
    } else if r < rubin_lo {
        Some(EquipoiseLean::AttLike)
    } else {
        None
    };
    match (by_p, by_r) {
        (Some(a), Some(b)) if a != b => (
            a,
            Some(format!(
                "prevalence suggests {a}, variance ratio suggests {b}; prevalence taken as dominant"
            )),
        ),
        (Some(a), _) => (a, None),
        (None, Some(b)) => (b, None),
        (None, None) => (EquipoiseLean::Balanced, None),
    }
}

pub fn overlap_summary(
    fp: &FittedPropensity,
    ds: &Dataset,
    rubin_lo: f64,
    rubin_hi: f64,
) -> OverlapSummary {
    let z = ds.treatment();
    let e1: Vec<f64> = (0..z.len())
        .filter(|&i| z[i] == 1)
        .map(|i| fp.scores[i])
        .collect();
    let e0: Vec<f64> = (0..z.len())
        .filter(|&i| z[i] == 0)
        .map(|i| fp.scores[i])
        .collect();
    let p = e1.len() as f64 / z.len() as f64;
    let (_, v1) = mean_var(e1.iter().copied());
    let (_, v0) = mean_var(e0.iter().copied());
    let r = v1 / v0;
    let (lean, note) = equipoise_lean(p, r, rubin_lo, rubin_hi);
    OverlapSummary {
        treated: SixNumber::of(&e1),
        control: SixNumber::of(&e0),
        prevalence: p,
        variance_ratio: r,
        equipoise_lean: lean,
        note,
    }
}
