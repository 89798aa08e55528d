//! Seeded data-generating processes, superpopulation oracles and the
//! Monte Carlo harness.

pub mod dgp;
pub mod monte_carlo;
pub mod truth;

pub use dgp::{
    draw_replicate, draw_unit, generate, generate_dgp1, generate_dgp2, generate_illustrative,
    noise_variances, units_to_dataset, DgpSpec, Effect, Family, Overlap, Prevalence, Scenario,
    Unit,
};
pub use monte_carlo::{
    run_monte_carlo, run_replicate, summarize, true_values, working_designs, Misspec,
    MonteCarloConfig, MonteCarloSummary, ReplicateOutcome,
};
pub use truth::{
    superpopulation, true_asymptotic_variance, true_asymptotic_variance_of, true_estimand,
    true_estimand_of, DEFAULT_SUPERPOP_N,
};
