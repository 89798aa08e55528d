//! Replicated estimation studies and their summary metrics.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::analysis::{point_estimate, sandwich_se, EstimatorMode};
use crate::error::{Error, Result};
use crate::glm::{fit_outcome_model, fit_propensity, DesignSpec, LogisticOptions};
use crate::par::{self, Execution};
use crate::scheme::WeightScheme;
use crate::weights::compute_weightset;

use super::dgp::{generate, DgpSpec};
use super::truth::{superpopulation, true_estimand_of, DEFAULT_SUPERPOP_N};

/// Which working models omit X1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Misspec {
    #[default]
    None,
    Ps,
    Outcome,
    Both,
}

impl Misspec {
    pub fn ps(self) -> bool {
        matches!(self, Misspec::Ps | Misspec::Both)
    }

    pub fn outcome(self) -> bool {
        matches!(self, Misspec::Outcome | Misspec::Both)
    }
}

impl FromStr for Misspec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Misspec::None),
            "ps" => Ok(Misspec::Ps),
            "outcome" => Ok(Misspec::Outcome),
            "both" => Ok(Misspec::Both),
            other => Err(Error::Config(format!("unknown misspecification `{other}`"))),
        }
    }
}

impl fmt::Display for Misspec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Misspec::None => "none",
            Misspec::Ps => "ps",
            Misspec::Outcome => "outcome",
            Misspec::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub spec: DgpSpec,
    pub schemes: Vec<WeightScheme>,
    pub mode: EstimatorMode,
    pub misspec: Misspec,
    pub n_reps: usize,
    pub superpop_n: usize,
    /// Seed of the superpopulation used for the true values.
    pub truth_seed: u64,
    pub exec: Execution,
}

impl MonteCarloConfig {
    pub fn new(
        spec: DgpSpec,
        schemes: Vec<WeightScheme>,
        mode: EstimatorMode,
        n_reps: usize,
    ) -> Self {
        Self {
            spec,
            schemes,
            mode,
            misspec: Misspec::None,
            n_reps,
            superpop_n: DEFAULT_SUPERPOP_N,
            truth_seed: spec.seed,
            exec: Execution::Parallel,
        }
    }
}

/// Metrics are on the ×100 scale except `cp` and `mean_estimate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub scheme: WeightScheme,
    pub true_value: f64,
    pub mean_estimate: f64,
    pub arb: f64,
    pub rmse: f64,
    pub sd: f64,
    pub se_avg: f64,
    pub cp: f64,
    pub n_reps: usize,
    pub n_failed: usize,
}

/// Per-replicate outcome for one scheme: estimate and sandwich SE
/// (NaN where no sandwich exists), or the error kind.
pub type ReplicateOutcome = std::result::Result<(f64, f64), &'static str>;

/// Working designs used in a replicate after misspecification.
pub fn working_designs(spec: &DgpSpec, misspec: Misspec) -> (DesignSpec, DesignSpec) {
    let full = DesignSpec::columns(&spec.covariate_names());
    let ps = if misspec.ps() {
        full.without("X1")
    } else {
        full.clone()
    };
    let outcome = if misspec.outcome() {
        full.without("X1")
    } else {
        full
    };
    (ps, outcome)
}

/// Fits and estimates every scheme on replicate `index`.
pub fn run_replicate(cfg: &MonteCarloConfig, index: u64) -> Vec<ReplicateOutcome> {
    let k = cfg.schemes.len();
    let ds = match generate(&cfg.spec, index) {
        Ok(ds) => ds,
        Err(e) => return vec![Err(e.kind()); k],
    };
    let (ps_design, outcome_design) = working_designs(&cfg.spec, cfg.misspec);
    let fp = match fit_propensity(&ds, &ps_design, LogisticOptions::default()) {
        Ok(fp) => fp,
        Err(e) => return vec![Err(e.kind()); k],
    };
    let of = if cfg.mode.needs_outcome_model() {
        match fit_outcome_model(&ds, &outcome_design) {
            Ok(of) => Some(of),
            Err(e) => return vec![Err(e.kind()); k],
        }
    } else {
        None
    };
    cfg.schemes
        .iter()
        .map(|&scheme| {
            let ws = compute_weightset(&ds, &fp, scheme).map_err(|e| e.kind())?;
            let est = point_estimate(&ds, &ws, of.as_ref(), cfg.mode).map_err(|e| e.kind())?;
            let se = if scheme.is_smooth() {
                sandwich_se(&ds, &fp, &ws, of.as_ref(), cfg.mode).map_err(|e| e.kind())?
            } else {
                f64::NAN
            };
            if est.is_finite() {
                Ok((est, se))
            } else {
                Err("NonFiniteEstimate")
            }
        })
        .collect()
}

/// Summary metrics of one scheme given its true value.
pub fn summarize(
    scheme: WeightScheme,
    truth: f64,
    outcomes: &[ReplicateOutcome],
) -> Result<MonteCarloSummary> {
    let ok: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o.ok()).collect();
    let n_failed = outcomes.len() - ok.len();
    if ok.is_empty() {
        return Err(Error::AllReplicatesFailed(outcomes.len()));
    }
    let m = ok.len() as f64;
    let mean = ok.iter().map(|o| o.0).sum::<f64>() / m;
    let mse = ok.iter().map(|o| (o.0 - truth).powi(2)).sum::<f64>() / m;
    // Divisor m, so that rmse² = sd² + bias² holds exactly.
    let var = ok.iter().map(|o| (o.0 - mean).powi(2)).sum::<f64>() / m;
    let with_se: Vec<(f64, f64)> = ok.iter().copied().filter(|o| o.1.is_finite()).collect();
    let (se_avg, cp) = if with_se.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let k = with_se.len() as f64;
        let se = with_se.iter().map(|o| o.1).sum::<f64>() / k;
        let covered = with_se
            .iter()
            .filter(|(t, s)| (t - truth).abs() <= 1.96 * s)
            .count() as f64;
        (se, covered / k)
    };
    Ok(MonteCarloSummary {
        scheme,
        true_value: truth,
        mean_estimate: mean,
        arb: 100.0 * (mean - truth).abs() / truth.abs(),
        rmse: 100.0 * mse.sqrt(),
        sd: 100.0 * var.sqrt(),
        se_avg: 100.0 * se_avg,
        cp,
        n_reps: outcomes.len(),
        n_failed,
    })
}

/// True value of every scheme in `cfg`, from one shared superpopulation.
pub fn true_values(cfg: &MonteCarloConfig) -> Vec<f64> {
    let units = superpopulation(&cfg.spec, cfg.superpop_n, cfg.truth_seed, cfg.exec);
    cfg.schemes
        .iter()
        .map(|&s| true_estimand_of(&units, s))
        .collect()
}

/// Runs all replicates and summarizes each scheme. Replicates are
/// independent and reduced in index order, so the result does not depend
/// on the number of worker threads.
pub fn run_monte_carlo(cfg: &MonteCarloConfig) -> Result<Vec<MonteCarloSummary>> {
    if cfg.n_reps < 2 {
        return Err(Error::Config("need at least 2 replicates".into()));
    }
    if cfg.schemes.is_empty() {
        return Err(Error::Config("no weighting scheme requested".into()));
    }
    let truths = true_values(cfg);
    let reps = par::map_indices(cfg.n_reps, cfg.exec, |r| run_replicate(cfg, r as u64));
    cfg.schemes
        .iter()
        .enumerate()
        .map(|(k, &scheme)| {
            let col: Vec<ReplicateOutcome> = reps.iter().map(|r| r[k]).collect();
            summarize(scheme, truths[k], &col)
        })
        .collect()
}
