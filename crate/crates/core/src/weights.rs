//! Selection functions g, balancing weights w_z = g·e^{−z}(1−e)^{z−1},
//! their normalizations and their derivatives through the logistic link.
//!
//! Derivatives are taken with respect to the linear predictor η = V'β, so
//! ∂/∂β = (∂/∂η)·V. Since de/dη = e(1−e), each `d*_deta` is the
//! derivative in e multiplied by e(1−e).

use nalgebra::{DVector, Matrix4, Vector4};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::FittedPropensity;
use crate::scheme::WeightScheme;

/// Cubic pieces replacing the matching-weight kink on [0.5−δ, 0.5+δ].
/// `a1` approximates w₁ and `a2` approximates w₀, coefficients in
/// increasing powers of e.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedMatchingCoeffs {
    pub delta: f64,
    pub a1: [f64; 4],
    pub a2: [f64; 4],
}

impl SmoothedMatchingCoeffs {
    pub fn new(delta: f64) -> Self {
        let lo = 0.5 - delta;
        let hi = 0.5 + delta;
        // Rows: value at lo, slope at lo, value at hi, slope at hi.
        let d = Matrix4::new(
            1.0,
            lo,
            lo * lo,
            lo * lo * lo,
            0.0,
            1.0,
            2.0 * lo,
            3.0 * lo * lo,
            1.0,
            hi,
            hi * hi,
            hi * hi * hi,
            0.0,
            1.0,
            2.0 * hi,
            3.0 * hi * hi,
        );
        let r = (1.0 - 2.0 * delta) / (1.0 + 2.0 * delta);
        let s = 4.0 / ((1.0 + 2.0 * delta) * (1.0 + 2.0 * delta));
        let lu = d.lu();
        let a1 = lu
            .solve(&Vector4::new(1.0, 0.0, r, -s))
            .expect("junction system is nonsingular for delta in (0, 0.5)");
        let a2 = lu
            .solve(&Vector4::new(r, s, 1.0, 0.0))
            .expect("junction system is nonsingular for delta in (0, 0.5)");
        Self {
            delta,
            a1: [a1[0], a1[1], a1[2], a1[3]],
            a2: [a2[0], a2[1], a2[2], a2[3]],
        }
    }

    pub fn in_band(&self, e: f64) -> bool {
        (e - 0.5).abs() <= self.delta
    }

    pub fn p1(&self, e: f64) -> f64 {
        cubic(&self.a1, e)
    }

    pub fn p2(&self, e: f64) -> f64 {
        cubic(&self.a2, e)
    }

    pub fn p1_prime(&self, e: f64) -> f64 {
        cubic_prime(&self.a1, e)
    }

    pub fn p2_prime(&self, e: f64) -> f64 {
        cubic_prime(&self.a2, e)
    }
}

fn cubic(a: &[f64; 4], e: f64) -> f64 {
    a[0] + e * (a[1] + e * (a[2] + e * a[3]))
}

fn cubic_prime(a: &[f64; 4], e: f64) -> f64 {
    a[1] + e * (2.0 * a[2] + e * 3.0 * a[3])
}

fn in_mw_band(delta: f64, e: f64) -> Option<SmoothedMatchingCoeffs> {
    ((e - 0.5).abs() <= delta).then(|| SmoothedMatchingCoeffs::new(delta))
}

/// Bernoulli entropy with 0·ln 0 = 0.
pub fn entropy(e: f64) -> f64 {
    let t = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    t(e) + t(1.0 - e)
}

fn indicator(alpha: f64, e: f64) -> f64 {
    if alpha <= e && e <= 1.0 - alpha {
        1.0
    } else {
        0.0
    }
}

/// g(e). For TRUNC this returns the arm-free overlap indicator I_α; the
/// capped tails depend on the arm, see [`selection_g_arm`].
pub fn selection_g(scheme: WeightScheme, e: f64) -> f64 {
    match scheme {
        WeightScheme::Ipw => 1.0,
        WeightScheme::Att => e,
        WeightScheme::Atc => 1.0 - e,
        WeightScheme::Trim { alpha } | WeightScheme::Trunc { alpha } => indicator(alpha, e),
        WeightScheme::Ow => e * (1.0 - e),
        WeightScheme::Mw { delta } => match in_mw_band(delta, e) {
            Some(c) => e * c.p1(e),
            None => e.min(1.0 - e),
        },
        WeightScheme::Ew => entropy(e),
        WeightScheme::Bw { nu } => (e * (1.0 - e)).powf(nu - 1.0),
    }
}

/// g as seen by arm `z`. Equal to [`selection_g`] except for TRUNC, where
/// g_z(e) = I_α(e) + J_α(e)^z·J_α(1−e)^{1−z} with the J term restricted to
/// the tails.
pub fn selection_g_arm(scheme: WeightScheme, e: f64, z: u8) -> f64 {
    match scheme {
        WeightScheme::Trunc { .. } => {
            let p = if z == 1 { e } else { 1.0 - e };
            trunc_weight(scheme, e, z) * p
        }
        _ => selection_g(scheme, e),
    }
}

fn trunc_weight(scheme: WeightScheme, e: f64, z: u8) -> f64 {
    let WeightScheme::Trunc { alpha } = scheme else {
        unreachable!()
    };
    // Arm-specific propensity p = P(Z=z | x); weights are 1/p capped at the
    // truncation points.
    let (p, low_cap, high_cap) = if z == 1 {
        (e, 1.0 / alpha, 1.0 / (1.0 - alpha))
    } else {
        (1.0 - e, 1.0 / alpha, 1.0 / (1.0 - alpha))
    };
    if p < alpha {
        low_cap
    } else if p > 1.0 - alpha {
        high_cap
    } else {
        1.0 / p
    }
}

fn finite(w: f64) -> Result<f64> {
    if w.is_finite() {
        Ok(w)
    } else {
        Err(Error::InfiniteWeight { rows: Vec::new() })
    }
}

/// w_z(e) using the closed forms where they remove a removable singularity.
pub fn weight_wz(scheme: WeightScheme, e: f64, z: u8) -> Result<f64> {
    let treated = z == 1;
    match scheme {
        WeightScheme::Ipw => finite(if treated { 1.0 / e } else { 1.0 / (1.0 - e) }),
        WeightScheme::Att => finite(if treated { 1.0 } else { e / (1.0 - e) }),
        WeightScheme::Atc => finite(if treated { (1.0 - e) / e } else { 1.0 }),
        WeightScheme::Trim { alpha } => Ok(if indicator(alpha, e) == 0.0 {
            0.0
        } else if treated {
            1.0 / e
        } else {
            1.0 / (1.0 - e)
        }),
        WeightScheme::Trunc { .. } => Ok(trunc_weight(scheme, e, z)),
        WeightScheme::Ow => Ok(if treated { 1.0 - e } else { e }),
        WeightScheme::Mw { delta } => Ok(match in_mw_band(delta, e) {
            Some(c) if treated => c.p1(e),
            Some(c) => c.p2(e),
            None if treated => {
                if e <= 0.5 {
                    1.0
                } else {
                    (1.0 - e) / e
                }
            }
            None => {
                if e > 0.5 {
                    1.0
                } else {
                    e / (1.0 - e)
                }
            }
        }),
        WeightScheme::Ew => {
            if treated {
                if e == 1.0 {
                    return Ok(0.0);
                }
                finite(-e.ln() - (1.0 - e) * (-e).ln_1p() / e)
            } else {
                if e == 0.0 {
                    return Ok(0.0);
                }
                finite(-(-e).ln_1p() - e * e.ln() / (1.0 - e))
            }
        }
        WeightScheme::Bw { nu } => Ok(if treated {
            e.powf(nu - 2.0) * (1.0 - e).powf(nu - 1.0)
        } else {
            e.powf(nu - 1.0) * (1.0 - e).powf(nu - 2.0)
        }),
    }
}

fn unsupported(scheme: WeightScheme) -> Error {
    Error::UnsupportedScheme {
        scheme: scheme.to_string(),
        reason: "indicator-based weights have no gradient; use the bootstrap",
    }
}

/// ∂w_z/∂η at propensity e.
pub fn weight_dw_deta(scheme: WeightScheme, e: f64, z: u8) -> Result<f64> {
    let treated = z == 1;
    let v = e * (1.0 - e);
    let d = match scheme {
        WeightScheme::Ipw => {
            if treated {
                -(1.0 - e) / e
            } else {
                e / (1.0 - e)
            }
        }
        WeightScheme::Att => {
            if treated {
                0.0
            } else {
                e / (1.0 - e)
            }
        }
        WeightScheme::Atc => {
            if treated {
                -(1.0 - e) / e
            } else {
                0.0
            }
        }
        WeightScheme::Ow => {
            if treated {
                -v
            } else {
                v
            }
        }
        WeightScheme::Mw { delta } => match in_mw_band(delta, e) {
            Some(c) if treated => c.p1_prime(e) * v,
            Some(c) => c.p2_prime(e) * v,
            None if treated => {
                if e <= 0.5 {
                    0.0
                } else {
                    -(1.0 - e) / e
                }
            }
            None => {
                if e > 0.5 {
                    0.0
                } else {
                    e / (1.0 - e)
                }
            }
        },
        WeightScheme::Ew => {
            if treated {
                (1.0 - e) / e * (-e).ln_1p()
            } else {
                -e / (1.0 - e) * e.ln()
            }
        }
        WeightScheme::Bw { nu } => {
            if treated {
                e.powf(nu - 2.0) * (1.0 - e).powf(nu - 1.0) * ((nu - 2.0) - (2.0 * nu - 3.0) * e)
            } else {
                e.powf(nu - 1.0) * (1.0 - e).powf(nu - 2.0) * ((nu - 1.0) - (2.0 * nu - 3.0) * e)
            }
        }
        WeightScheme::Trim { .. } | WeightScheme::Trunc { .. } => return Err(unsupported(scheme)),
    };
    finite(d)
}

/// ∂g/∂η at propensity e.
pub fn selection_dg_deta(scheme: WeightScheme, e: f64) -> Result<f64> {
    let v = e * (1.0 - e);
    let d = match scheme {
        WeightScheme::Ipw => 0.0,
        WeightScheme::Att => v,
        WeightScheme::Atc => -v,
        WeightScheme::Ow => (1.0 - 2.0 * e) * v,
        WeightScheme::Mw { delta } => match in_mw_band(delta, e) {
            Some(c) => (c.p1(e) + e * c.p1_prime(e)) * v,
            None if e <= 0.5 => v,
            None => -v,
        },
        WeightScheme::Ew => {
            if v == 0.0 {
                0.0
            } else {
                ((1.0 - e) / e).ln() * v
            }
        }
        WeightScheme::Bw { nu } => (nu - 1.0) * v.powf(nu - 1.0) * (1.0 - 2.0 * e),
        WeightScheme::Trim { .. } | WeightScheme::Trunc { .. } => return Err(unsupported(scheme)),
    };
    finite(d)
}

/// ∂w_z/∂β for one unit with design row `v_row`.
pub fn weight_gradient(scheme: WeightScheme, e: f64, z: u8, v_row: &[f64]) -> Result<DVector<f64>> {
    let d = weight_dw_deta(scheme, e, z)?;
    Ok(DVector::from_iterator(
        v_row.len(),
        v_row.iter().map(|x| d * x),
    ))
}

/// ∂g/∂β for one unit with design row `v_row`.
pub fn selection_gradient(scheme: WeightScheme, e: f64, v_row: &[f64]) -> Result<DVector<f64>> {
    let d = selection_dg_deta(scheme, e)?;
    Ok(DVector::from_iterator(
        v_row.len(),
        v_row.iter().map(|x| d * x),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub scheme: WeightScheme,
    /// g of each unit; for TRUNC the value for the unit's own arm.
    pub g_values: Vec<f64>,
    /// w₁ at every unit. Units outside the treated arm may hold +∞ when
    /// their propensity sits on a boundary; only treated entries are used.
    pub raw_w1: Vec<f64>,
    /// w₀ at every unit, with the same caveat for treated units.
    pub raw_w0: Vec<f64>,
    /// Z_i·w₁/N_{w1}; zero for controls.
    pub norm_w1: Vec<f64>,
    /// (1−Z_i)·w₀/N_{w0}; zero for treated units.
    pub norm_w0: Vec<f64>,
    pub sum_w1: f64,
    pub sum_w0: f64,
}

impl WeightSet {
    /// Normalized weight of unit `i` in its own arm.
    pub fn own_weight(&self, ds: &Dataset, i: usize) -> f64 {
        if ds.treatment()[i] == 1 {
            self.norm_w1[i]
        } else {
            self.norm_w0[i]
        }
    }
}

pub fn compute_weightset(
    ds: &Dataset,
    fp: &FittedPropensity,
    scheme: WeightScheme,
) -> Result<WeightSet> {
    compute_weightset_from_scores(ds, &fp.scores, scheme)
}

pub fn compute_weightset_from_scores(
    ds: &Dataset,
    scores: &[f64],
    scheme: WeightScheme,
) -> Result<WeightSet> {
    let n = ds.n_units();
    if scores.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {n} units",
            scores.len()
        )));
    }
    let z = ds.treatment();
    let mut g = Vec::with_capacity(n);
    let mut w1 = Vec::with_capacity(n);
    let mut w0 = Vec::with_capacity(n);
    let mut bad = Vec::new();
    for i in 0..n {
        let e = scores[i];
        g.push(selection_g_arm(scheme, e, z[i]));
        let a = weight_wz(scheme, e, 1);
        let b = weight_wz(scheme, e, 0);
        if (z[i] == 1 && a.is_err()) || (z[i] == 0 && b.is_err()) {
            bad.push(i);
        }
        w1.push(a.unwrap_or(f64::INFINITY));
        w0.push(b.unwrap_or(f64::INFINITY));
    }
    if !bad.is_empty() {
        return Err(Error::InfiniteWeight { rows: bad });
    }
    let sum_w1: f64 = (0..n).filter(|&i| z[i] == 1).map(|i| w1[i]).sum();
    let sum_w0: f64 = (0..n).filter(|&i| z[i] == 0).map(|i| w0[i]).sum();
    if !(sum_w1 > 0.0) {
        return Err(Error::EmptyEffectiveArm { arm: 1 });
    }
    if !(sum_w0 > 0.0) {
        return Err(Error::EmptyEffectiveArm { arm: 0 });
    }
    let norm_w1 = (0..n)
        .map(|i| if z[i] == 1 { w1[i] / sum_w1 } else { 0.0 })
        .collect();
    let norm_w0 = (0..n)
        .map(|i| if z[i] == 0 { w0[i] / sum_w0 } else { 0.0 })
        .collect();
    Ok(WeightSet {
        scheme,
        g_values: g,
        raw_w1: w1,
        raw_w0: w0,
        norm_w1,
        norm_w0,
        sum_w1,
        sum_w0,
    })
}
