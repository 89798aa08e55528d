use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use equipoise::diagnostics::{overlap_summary, weighted_smd, BalanceTable, OverlapSummary};
use equipoise::glm::fit_propensity;
use equipoise::simulation::{
    run_monte_carlo, superpopulation, true_estimand_of, DgpSpec, Effect, Family, Misspec,
    MonteCarloConfig, MonteCarloSummary, Overlap, Prevalence, Scenario,
};
use equipoise::weights::compute_weightset;
use equipoise::{
    analyze, AnalysisConfig, DesignSpec, Error, ErrorClass, EstimateReport, EstimatorMode,
    Execution, LogisticOptions, RawTable, Result, VarianceMethod, WeightScheme,
};
use serde::Serialize;

use crate::format::{full, show};
use crate::{BalanceArgs, EstimateArgs, SimulateArgs};

pub const SCHEMA_VERSION: u32 = 1;

pub fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(())
}

pub fn report_error(e: &Error) -> ExitCode {
    eprintln!("error[{}]: {e}", e.kind());
    let code = match e.class() {
        ErrorClass::Config => {
            eprintln!("\n{}", crate::usage());
            2
        }
        ErrorClass::Numerical => 3,
        ErrorClass::Data => 4,
    };
    ExitCode::from(code)
}

fn parse_schemes(list: &str) -> Result<Vec<WeightScheme>> {
    let schemes: Vec<WeightScheme> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if schemes.is_empty() {
        return Err(Error::Config("no weighting scheme given".into()));
    }
    Ok(schemes)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load(data: &crate::DataArgs) -> Result<(equipoise::Dataset, DesignSpec)> {
    let raw = RawTable::from_csv_path(&data.input)?;
    let ds = equipoise::validate_dataset(&raw, &data.treat, &data.outcome)?;
    let ps = match &data.ps_design {
        Some(s) => DesignSpec::parse(s)?,
        None => DesignSpec::main_effects(&ds),
    };
    Ok((ds, ps))
}

fn parse_variance(kind: &str, reps: usize, seed: u64) -> Result<VarianceMethod> {
    match kind.trim().to_ascii_lowercase().as_str() {
        "sandwich" => Ok(VarianceMethod::Sandwich),
        "bootstrap" => Ok(VarianceMethod::Bootstrap { reps, seed }),
        "none" => Ok(VarianceMethod::None),
        other => Err(Error::Config(format!("unknown variance method `{other}`"))),
    }
}

#[derive(Serialize)]
struct EstimateBundle<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    ps_design: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome_design: Option<String>,
    estimates: &'a [EstimateReport],
    overlap: OverlapSummary,
    balance: Vec<BalanceTable>,
}

pub fn estimate(a: EstimateArgs) -> Result<()> {
    let (ds, ps_design) = load(&a.data)?;
    let outcome_design = match &a.outcome_design {
        Some(s) => DesignSpec::parse(s)?,
        None => DesignSpec::main_effects(&ds),
    };
    let cfg = AnalysisConfig {
        ps_design,
        outcome_design,
        schemes: parse_schemes(&a.schemes)?,
        mode: a.mode.parse()?,
        variance: parse_variance(&a.variance, a.bootstrap_reps, a.seed)?,
        logistic: LogisticOptions::default(),
        exec: Execution::Parallel,
    };
    let reports = analyze(&ds, &cfg)?;
    for r in &reports {
        for w in &r.warnings {
            eprintln!("warning[{}]: {w}", r.scheme);
        }
    }

    let sw = reports
        .iter()
        .map(|r| r.scheme.to_string().len())
        .max()
        .unwrap_or(0)
        .max(10);
    let ew = reports
        .iter()
        .map(|r| r.estimand_label.len())
        .max()
        .unwrap_or(0)
        .max(10);
    println!(
        "{:<sw$} {:<ew$} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>8}",
        "scheme", "estimand", "estimate", "se", "ci_lo", "ci_hi", "ess_1", "ess_0", "vi"
    );
    for r in &reports {
        println!(
            "{:<sw$} {:<ew$} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>8}",
            r.scheme.to_string(),
            r.estimand_label,
            show(r.point),
            show(r.se),
            show(r.ci95.0),
            show(r.ci95.1),
            show(r.ess_treated),
            show(r.ess_control),
            show(r.variance_inflation)
        );
    }

    if let Some(path) = &a.output {
        let mut w = csv_writer(path)?;
        w.write_record([
            "scheme",
            "estimand",
            "estimator",
            "point",
            "se",
            "variance_method",
            "ci_lo",
            "ci_hi",
            "ess_treated",
            "ess_control",
            "variance_inflation",
            "n_used",
            "bootstrap_failed",
        ])
        .map_err(Error::from)?;
        for r in &reports {
            w.write_record([
                r.scheme.to_string(),
                r.estimand_label.to_owned(),
                r.estimator.to_string(),
                full(r.point),
                full(r.se),
                r.variance_method.to_owned(),
                full(r.ci95.0),
                full(r.ci95.1),
                full(r.ess_treated),
                full(r.ess_control),
                full(r.variance_inflation),
                r.n_used.to_string(),
                r.bootstrap_failed
                    .map(|n| n.to_string())
                    .unwrap_or_default(),
            ])
            .map_err(Error::from)?;
        }
        w.flush()?;
    }

    if let Some(path) = &a.report {
        let fp = fit_propensity(&ds, &cfg.ps_design, cfg.logistic)?;
        let balance = cfg
            .schemes
            .iter()
            .map(|&s| compute_weightset(&ds, &fp, s).and_then(|ws| weighted_smd(&ds, &ws)))
            .collect::<Result<Vec<_>>>()?;
        let bundle = EstimateBundle {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            ps_design: cfg.ps_design.to_string(),
            outcome_design: cfg
                .mode
                .needs_outcome_model()
                .then(|| cfg.outcome_design.to_string()),
            estimates: &reports,
            overlap: overlap_summary(&fp, &ds, 0.5, 2.0),
            balance,
        };
        write_json(path, &bundle)?;
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn balance(a: BalanceArgs) -> Result<()> {
    let (ds, ps_design) = load(&a.data)?;
    let scheme: WeightScheme = a.scheme.parse()?;
    let fp = fit_propensity(&ds, &ps_design, LogisticOptions::default())?;
    let ws = compute_weightset(&ds, &fp, scheme)?;
    let table = weighted_smd(&ds, &ws)?;
    let ov = overlap_summary(&fp, &ds, a.rubin_lo, a.rubin_hi);

    println!(
        "{:<16} {:>14} {:>14}",
        "covariate",
        "smd_unweighted",
        format!("smd_{}", table.scheme)
    );
    for r in &table.rows {
        println!(
            "{:<16} {:>14} {:>14}",
            r.name,
            show(r.smd_unweighted),
            show(r.smd_weighted)
        );
    }
    println!();
    println!(
        "prevalence {}  variance ratio {}  equipoise lean {}",
        show(ov.prevalence),
        show(ov.variance_ratio),
        ov.equipoise_lean
    );
    if let Some(note) = &ov.note {
        eprintln!("note: {note}");
    }

    if let Some(path) = &a.output {
        let mut w = csv_writer(path)?;
        w.write_record(["name", "smd_unweighted", "smd_weighted"])
            .map_err(Error::from)?;
        for r in &table.rows {
            w.write_record([r.name.clone(), full(r.smd_unweighted), full(r.smd_weighted)])
                .map_err(Error::from)?;
        }
        w.flush()?;
    }
    if let Some(path) = &a.overlap_output {
        let mut w = csv_writer(path)?;
        w.write_record([
            "arm",
            "min",
            "q1",
            "median",
            "mean",
            "q3",
            "max",
            "prevalence",
            "variance_ratio",
            "equipoise_lean",
        ])
        .map_err(Error::from)?;
        for (arm, s) in [("treated", &ov.treated), ("control", &ov.control)] {
            w.write_record([
                arm.to_owned(),
                full(s.min),
                full(s.q1),
                full(s.median),
                full(s.mean),
                full(s.q3),
                full(s.max),
                full(ov.prevalence),
                full(ov.variance_ratio),
                ov.equipoise_lean.to_string(),
            ])
            .map_err(Error::from)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn reject_flag(present: bool, flag: &str, dgp: &str) -> Result<()> {
    if present {
        Err(Error::Config(format!(
            "--{flag} does not apply to --dgp {dgp}"
        )))
    } else {
        Ok(())
    }
}

fn require<T: std::str::FromStr<Err = Error>>(
    value: &Option<String>,
    flag: &str,
    dgp: &str,
) -> Result<T> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("--dgp {dgp} requires --{flag}")))?
        .parse()
}

fn build_spec(a: &SimulateArgs) -> Result<DgpSpec> {
    let dgp = a.dgp.trim().to_ascii_lowercase();
    let effect =
        |default: Effect| -> Result<Effect> { a.effect.as_deref().map_or(Ok(default), str::parse) };
    match dgp.as_str() {
        "dgp1" => {
            reject_flag(a.prevalence.is_some(), "prevalence", &dgp)?;
            reject_flag(a.scenario.is_some(), "scenario", &dgp)?;
            let overlap: Overlap = require(&a.overlap, "overlap", &dgp)?;
            Ok(DgpSpec::dgp1(
                overlap,
                effect(Effect::Homogeneous)?,
                a.n.unwrap_or(2000),
                a.seed,
            ))
        }
        "dgp2" => {
            reject_flag(a.scenario.is_some(), "scenario", &dgp)?;
            let overlap: Overlap = require(&a.overlap, "overlap", &dgp)?;
            let prevalence: Prevalence = require(&a.prevalence, "prevalence", &dgp)?;
            Ok(DgpSpec::dgp2(
                prevalence,
                overlap,
                effect(Effect::Homogeneous)?,
                a.n.unwrap_or(2000),
                a.seed,
            ))
        }
        "illustrative" => {
            reject_flag(a.overlap.is_some(), "overlap", &dgp)?;
            reject_flag(a.prevalence.is_some(), "prevalence", &dgp)?;
            reject_flag(a.effect.is_some(), "effect", &dgp)?;
            let scenario: Scenario = require(&a.scenario, "scenario", &dgp)?;
            Ok(DgpSpec::illustrative(scenario, a.n.unwrap_or(1000), a.seed))
        }
        other => Err(Error::Config(format!("unknown --dgp `{other}`"))),
    }
}

fn default_schemes(spec: &DgpSpec) -> &'static str {
    match spec.family {
        Family::Illustrative { .. } => "IPW,ATT,ATC,OW,MW,EW,BW(11),BW(81)",
        _ => "IPW,OW,MW,EW,BW(11),BW(81)",
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: &'static str,
    version: &'static str,
    spec: &'a DgpSpec,
    schemes: Vec<String>,
    mode: EstimatorMode,
    misspec: Misspec,
    reps: usize,
    base_seed: u64,
    superpop_n: usize,
    truth_seed: u64,
    truth_only: bool,
    rng: &'static str,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = build_spec(&a)?;
    let schemes = parse_schemes(a.schemes.as_deref().unwrap_or(default_schemes(&spec)))?;
    let mode: EstimatorMode = a.mode.parse()?;
    let misspec: Misspec = a.misspec.parse()?;
    if a.truth_only && (a.misspec != "none" || a.mode != "hajek") {
        return Err(Error::Config(
            "--truth-only takes no estimator options".into(),
        ));
    }
    let mut cfg = MonteCarloConfig::new(spec, schemes.clone(), mode, a.reps);
    cfg.misspec = misspec;
    cfg.superpop_n = a.superpop;

    if a.truth_only {
        let units = superpopulation(&spec, cfg.superpop_n, cfg.truth_seed, Execution::Parallel);
        let truths: Vec<f64> = schemes
            .iter()
            .map(|&s| true_estimand_of(&units, s))
            .collect();
        let sw = schemes
            .iter()
            .map(|s| s.to_string().len())
            .max()
            .unwrap_or(0)
            .max(10);
        println!("{:<sw$} {:>12}", "scheme", "true_value");
        for (s, t) in schemes.iter().zip(&truths) {
            println!("{:<sw$} {:>12}", s.to_string(), show(*t));
        }
        if let Some(path) = &a.output {
            let mut w = csv_writer(path)?;
            w.write_record(["scheme", "true_value"])
                .map_err(Error::from)?;
            for (s, t) in schemes.iter().zip(&truths) {
                w.write_record([s.to_string(), full(*t)])
                    .map_err(Error::from)?;
            }
            w.flush()?;
        }
    } else {
        let rows = run_monte_carlo(&cfg)?;
        print_summaries(&rows);
        for r in rows.iter().filter(|r| r.n_failed > 0) {
            eprintln!(
                "warning[{}]: {} of {} replicates failed",
                r.scheme, r.n_failed, r.n_reps
            );
        }
        if let Some(path) = &a.output {
            write_summaries(path, &rows)?;
        }
    }

    let manifest_path = a
        .manifest
        .clone()
        .or_else(|| a.output.as_ref().map(|p| manifest_for(p)));
    if let Some(path) = manifest_path {
        let m = Manifest {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            spec: &spec,
            schemes: schemes.iter().map(ToString::to_string).collect(),
            mode,
            misspec,
            reps: a.reps,
            base_seed: a.seed,
            superpop_n: cfg.superpop_n,
            truth_seed: cfg.truth_seed,
            truth_only: a.truth_only,
            rng: "ChaCha8, stream = replicate index",
        };
        write_json(&path, &m)?;
    }
    Ok(())
}

fn manifest_for(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn print_summaries(rows: &[MonteCarloSummary]) {
    let sw = rows
        .iter()
        .map(|r| r.scheme.to_string().len())
        .max()
        .unwrap_or(0)
        .max(10);
    println!(
        "{:<sw$} {:>10} {:>10} {:>8} {:>10} {:>10} {:>10} {:>7} {:>7}",
        "scheme", "true", "mean", "arb", "rmse", "sd", "se", "cp", "failed"
    );
    for r in rows {
        println!(
            "{:<sw$} {:>10} {:>10} {:>8} {:>10} {:>10} {:>10} {:>7} {:>7}",
            r.scheme.to_string(),
            show(r.true_value),
            show(r.mean_estimate),
            show(r.arb),
            show(r.rmse),
            show(r.sd),
            show(r.se_avg),
            show(r.cp),
            r.n_failed
        );
    }
}

fn write_summaries(path: &Path, rows: &[MonteCarloSummary]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "scheme",
        "true_value",
        "mean_estimate",
        "arb",
        "rmse",
        "sd",
        "se_avg",
        "cp",
        "n_reps",
        "n_failed",
    ])
    .map_err(Error::from)?;
    for r in rows {
        w.write_record([
            r.scheme.to_string(),
            full(r.true_value),
            full(r.mean_estimate),
            full(r.arb),
            full(r.rmse),
            full(r.sd),
            full(r.se_avg),
            full(r.cp),
            r.n_reps.to_string(),
            r.n_failed.to_string(),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}
