//! Data-generating processes.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::logistic;
use crate::par::replicate_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlap {
    Good,
    Moderate,
    Poor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Prevalence {
    Medium,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Scenario {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Dgp1 {
        overlap: Overlap,
    },
    Dgp2 {
        prevalence: Prevalence,
        overlap: Overlap,
    },
    Illustrative {
        scenario: Scenario,
    },
}

/// A fully determined simulation design. The illustrative family has
/// heterogeneous effects by construction and ignores `effect`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub family: Family,
    pub effect: Effect,
    pub n: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn dgp1(overlap: Overlap, effect: Effect, n: usize, seed: u64) -> Self {
        Self {
            family: Family::Dgp1 { overlap },
            effect,
            n,
            seed,
        }
    }

    pub fn dgp2(
        prevalence: Prevalence,
        overlap: Overlap,
        effect: Effect,
        n: usize,
        seed: u64,
    ) -> Self {
        Self {
            family: Family::Dgp2 {
                prevalence,
                overlap,
            },
            effect,
            n,
            seed,
        }
    }

    pub fn illustrative(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self {
            family: Family::Illustrative { scenario },
            effect: Effect::Heterogeneous,
            n,
            seed,
        }
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.n_covariates()).map(|j| format!("X{j}")).collect()
    }

    pub fn n_covariates(&self) -> usize {
        match self.family {
            Family::Dgp1 { .. } => 4,
            Family::Dgp2 { .. } => 6,
            Family::Illustrative { .. } => 2,
        }
    }
}

macro_rules! parse_enum {
    ($t:ty, $what:literal, { $($s:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s => Ok($v),)+
                    other => Err(Error::Config(format!("unknown {} `{}`", $what, other))),
                }
            }
        }
    };
}

parse_enum!(Overlap, "overlap", {
    "good" => Overlap::Good,
    "moderate" => Overlap::Moderate,
    "mod" => Overlap::Moderate,
    "poor" => Overlap::Poor,
});
parse_enum!(Prevalence, "prevalence", {
    "medium" => Prevalence::Medium,
    "low" => Prevalence::Low,
});
parse_enum!(Scenario, "scenario", {
    "a" => Scenario::A,
    "b" => Scenario::B,
    "c" => Scenario::C,
});
parse_enum!(Effect, "effect", {
    "homo" => Effect::Homogeneous,
    "homogeneous" => Effect::Homogeneous,
    "hetero" => Effect::Heterogeneous,
    "heterogeneous" => Effect::Heterogeneous,
});

impl fmt::Display for Overlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Overlap::Good => "good",
            Overlap::Moderate => "moderate",
            Overlap::Poor => "poor",
        })
    }
}

/// One simulated unit with its potential outcomes and true nuisances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub x: [f64; 6],
    pub e: f64,
    pub m1: f64,
    pub m0: f64,
    pub y1: f64,
    pub y0: f64,
    pub z: u8,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Noise SD of the DGP2 outcome; "N(0, 1.5)" read as (mean, SD).
pub const DGP2_NOISE_SD: f64 = 1.5;
/// SD of the first illustrative covariate; "N(2, 2)" read as (mean, SD).
pub const ILLUSTRATIVE_X1_SD: f64 = 2.0;
/// Noise SD of the illustrative treated potential outcome.
pub const ILLUSTRATIVE_EPS1_SD: f64 = 2.0;

fn dgp1_beta(overlap: Overlap) -> [f64; 5] {
    match overlap {
        Overlap::Good => [-0.5, 0.3, 0.4, 0.4, 0.4],
        Overlap::Moderate => [-1.0, 0.6, 0.8, 0.8, 0.8],
        Overlap::Poor => [-1.5, 0.9, 1.2, 1.2, 1.2],
    }
}

fn dgp2_beta(prevalence: Prevalence, overlap: Overlap) -> [f64; 7] {
    let gamma = match overlap {
        Overlap::Good => 1.0,
        Overlap::Moderate => 2.0,
        Overlap::Poor => 3.0,
    };
    let b0 = match (prevalence, overlap) {
        (Prevalence::Low, Overlap::Good) => -2.1,
        (Prevalence::Low, Overlap::Moderate) => -2.2,
        (Prevalence::Low, Overlap::Poor) => -2.8,
        (Prevalence::Medium, Overlap::Good) => -0.1,
        (Prevalence::Medium, Overlap::Moderate) => 0.0,
        (Prevalence::Medium, Overlap::Poor) => 0.2,
    };
    [
        b0,
        0.15 * gamma,
        0.3 * gamma,
        0.3 * gamma,
        -0.2 * gamma,
        -0.25 * gamma,
        -0.25 * gamma,
    ]
}

fn illustrative_alpha(scenario: Scenario) -> [f64; 3] {
    match scenario {
        Scenario::A => [-2.8, 0.2, 0.8],
        Scenario::B => [-1.6, 0.45, 0.6],
        Scenario::C => [0.2, 0.8, 0.2],
    }
}

/// Draws one unit. The order of random draws is fixed so that a stream
/// maps to the same units on every platform.
pub fn draw_unit<R: Rng>(family: Family, effect: Effect, rng: &mut R) -> Unit {
    let mut x = [0.0; 6];
    let (e, m1, m0, sd1, sd0) = match family {
        Family::Dgp1 { overlap } => {
            let x4 = bernoulli(rng, 0.5);
            let x3 = bernoulli(rng, 0.4 + 0.2 * x4);
            let mean1 = x4 - x3 + 0.5 * x3 * x4;
            let mean2 = -x4 + x3 + x3 * x4;
            let var = 2.0 - x3;
            let cov = 0.25 * (1.0 + x3);
            let (u1, u2) = (normal(rng), normal(rng));
            let l11 = var.sqrt();
            let l21 = cov / l11;
            let l22 = (var - l21 * l21).sqrt();
            x[0] = mean1 + l11 * u1;
            x[1] = mean2 + l21 * u1 + l22 * u2;
            x[2] = x3;
            x[3] = x4;
            let b = dgp1_beta(overlap);
            let e = logistic(b[0] + b[1] * x[0] + b[2] * x[1] + b[3] * x[2] + b[4] * x[3]);
            let m0 = 0.5 + x[0] + 0.6 * x[1] + 2.2 * x[2] + 1.2 * x[3];
            let delta = match effect {
                Effect::Homogeneous => 3.0,
                Effect::Heterogeneous => -12.0 * e * e + 12.0 * e + 3.0,
            };
            (e, m0 + delta, m0, 1.0, 1.0)
        }
        Family::Dgp2 {
            prevalence,
            overlap,
        } => {
            // Equicorrelated normals with correlation 0.5: √0.5·(c + u_j).
            let common = normal(rng);
            for v in x.iter_mut() {
                *v = std::f64::consts::FRAC_1_SQRT_2 * (common + normal(rng));
            }
            for v in x.iter_mut().skip(3) {
                *v = if *v < 0.0 { 1.0 } else { 0.0 };
            }
            let b = dgp2_beta(prevalence, overlap);
            let eta = b[0] + (0..6).map(|j| b[j + 1] * x[j]).sum::<f64>();
            let e = logistic(eta);
            let m0 = -0.5 * x[0] - 0.5 * x[1] - 1.5 * x[2] + 0.8 * x[3] + 0.8 * x[4] + x[5];
            let delta = match effect {
                Effect::Homogeneous => 0.75,
                Effect::Heterogeneous => e * e + 2.0 * e + 1.0,
            };
            (e, m0 + delta, m0, DGP2_NOISE_SD, DGP2_NOISE_SD)
        }
        Family::Illustrative { scenario } => {
            x[0] = 2.0 + ILLUSTRATIVE_X1_SD * normal(rng);
            x[1] = 1.0 + normal(rng);
            let a = illustrative_alpha(scenario);
            let e = logistic(a[0] + a[1] * x[0] + a[2] * x[1]);
            let m1 = 2.0 + x[0] + x[1] + 2.0 * x[0] * x[0] + 0.5 * x[1] * x[1];
            let m0 = x[0] + x[1];
            (e, m1, m0, ILLUSTRATIVE_EPS1_SD, 1.0)
        }
    };
    let z = u8::from(rng.random::<f64>() < e);
    let (eps1, eps0) = match family {
        // One outcome equation with a shared error term.
        Family::Dgp1 { .. } | Family::Dgp2 { .. } => {
            let eps = normal(rng);
            (eps, eps)
        }
        Family::Illustrative { .. } => (normal(rng), normal(rng)),
    };
    Unit {
        x,
        e,
        m1,
        m0,
        y1: m1 + sd1 * eps1,
        y0: m0 + sd0 * eps0,
        z,
    }
}

/// Conditional noise variances (σ₁², σ₀²) of the potential outcomes.
pub fn noise_variances(family: Family) -> (f64, f64) {
    match family {
        Family::Dgp1 { .. } => (1.0, 1.0),
        Family::Dgp2 { .. } => (DGP2_NOISE_SD.powi(2), DGP2_NOISE_SD.powi(2)),
        Family::Illustrative { .. } => (ILLUSTRATIVE_EPS1_SD.powi(2), 1.0),
    }
}

/// Replicate `index` as raw units, with true nuisances attached.
pub fn draw_replicate(spec: &DgpSpec, index: u64) -> Vec<Unit> {
    let mut rng = replicate_rng(spec.seed, index);
    (0..spec.n)
        .map(|_| draw_unit(spec.family, spec.effect, &mut rng))
        .collect()
}

/// Observed data of a set of units.
pub fn units_to_dataset(spec: &DgpSpec, units: &[Unit]) -> Result<Dataset> {
    let p = spec.n_covariates();
    let z: Vec<f64> = units.iter().map(|u| f64::from(u.z)).collect();
    let y = units
        .iter()
        .map(|u| if u.z == 1 { u.y1 } else { u.y0 })
        .collect();
    let x = DMatrix::from_fn(units.len(), p, |i, j| units[i].x[j]);
    Dataset::new(&z, y, x, spec.covariate_names())
}

/// Replicate `index` of `spec` as observed data.
pub fn generate(spec: &DgpSpec, index: u64) -> Result<Dataset> {
    units_to_dataset(spec, &draw_replicate(spec, index))
}

fn expect_family(spec: &DgpSpec, ok: bool, name: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "spec family {:?} is not {name}",
            spec.family
        )))
    }
}

pub fn generate_dgp1(spec: &DgpSpec, index: u64) -> Result<Dataset> {
    expect_family(spec, matches!(spec.family, Family::Dgp1 { .. }), "DGP1")?;
    generate(spec, index)
}

pub fn generate_dgp2(spec: &DgpSpec, index: u64) -> Result<Dataset> {
    expect_family(spec, matches!(spec.family, Family::Dgp2 { .. }), "DGP2")?;
    generate(spec, index)
}

pub fn generate_illustrative(spec: &DgpSpec, index: u64) -> Result<Dataset> {
    expect_family(
        spec,
        matches!(spec.family, Family::Illustrative { .. }),
        "ILLUSTRATIVE",
    )?;
    generate(spec, index)
}
