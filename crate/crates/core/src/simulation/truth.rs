//! Superpopulation oracles for the estimand and its asymptotic variance.

use crate::par::{self, replicate_rng, Execution};
use crate::scheme::WeightScheme;
use crate::weights::selection_g_arm;

use super::dgp::{draw_unit, DgpSpec, Unit};

pub const DEFAULT_SUPERPOP_N: usize = 1_000_000;

const CHUNK: usize = 1 << 16;
/// Keeps superpopulation streams apart from replicate streams.
const SUPERPOP_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// `n` units drawn in fixed-size chunks, each from its own stream.
pub fn superpopulation(spec: &DgpSpec, n: usize, seed: u64, exec: Execution) -> Vec<Unit> {
    let chunks = n.div_ceil(CHUNK);
    let parts = par::map_indices(chunks, exec, |c| {
        let mut rng = replicate_rng(seed ^ SUPERPOP_SALT, c as u64);
        let len = CHUNK.min(n - c * CHUNK);
        (0..len)
            .map(|_| draw_unit(spec.family, spec.effect, &mut rng))
            .collect::<Vec<_>>()
    });
    parts.into_iter().flatten().collect()
}

/// Arm-wise targets (τ¹, τ⁰) = (E[g₁m₁]/E[g₁], E[g₀m₀]/E[g₀]).
fn arm_targets(units: &[Unit], scheme: WeightScheme) -> (f64, f64) {
    let (mut n1, mut d1, mut n0, mut d0) = (0.0, 0.0, 0.0, 0.0);
    for u in units {
        let g1 = selection_g_arm(scheme, u.e, 1);
        let g0 = selection_g_arm(scheme, u.e, 0);
        n1 += g1 * u.m1;
        d1 += g1;
        n0 += g0 * u.m0;
        d0 += g0;
    }
    (n1 / d1, n0 / d0)
}

/// Σg(e)τ(x)/Σg(e) over a superpopulation with the true propensity and
/// conditional effect. For TRUNC the arm-specific selection functions
/// give a contrast of two weighted means.
pub fn true_estimand_of(units: &[Unit], scheme: WeightScheme) -> f64 {
    if let WeightScheme::Trunc { .. } = scheme {
        let (t1, t0) = arm_targets(units, scheme);
        return t1 - t0;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for u in units {
        let g = crate::weights::selection_g(scheme, u.e);
        num += g * (u.m1 - u.m0);
        den += g;
    }
    num / den
}

pub fn true_estimand(spec: &DgpSpec, scheme: WeightScheme, superpop_n: usize, seed: u64) -> f64 {
    let units = superpopulation(spec, superpop_n, seed, Execution::Parallel);
    true_estimand_of(&units, scheme)
}

/// Influence-function variance of the weighted estimator,
/// E[h²{(Y(1)−τ¹)²/e + (Y(0)−τ⁰)²/(1−e)}]
///   − E[h²{√((1−e)/e)(m₁−τ¹) + √(e/(1−e))(m₀−τ⁰)}²],
/// with h = g/E[g]. Units with g = 0 contribute nothing.
pub fn true_asymptotic_variance_of(units: &[Unit], scheme: WeightScheme) -> f64 {
    let n = units.len() as f64;
    let (t1, t0) = arm_targets(units, scheme);
    let mean_g = units
        .iter()
        .map(|u| crate::weights::selection_g(scheme, u.e))
        .sum::<f64>()
        / n;
    let mut first = 0.0;
    let mut second = 0.0;
    for u in units {
        let g = crate::weights::selection_g(scheme, u.e);
        if g == 0.0 {
            continue;
        }
        let h2 = (g / mean_g).powi(2);
        let e = u.e;
        first += h2 * ((u.y1 - t1).powi(2) / e + (u.y0 - t0).powi(2) / (1.0 - e));
        let s = ((1.0 - e) / e).sqrt() * (u.m1 - t1) + (e / (1.0 - e)).sqrt() * (u.m0 - t0);
        second += h2 * s * s;
    }
    (first - second) / n
}

pub fn true_asymptotic_variance(
    spec: &DgpSpec,
    scheme: WeightScheme,
    superpop_n: usize,
    seed: u64,
) -> f64 {
    let units = superpopulation(spec, superpop_n, seed, Execution::Parallel);
    true_asymptotic_variance_of(&units, scheme)
}
