mod format;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "equipoise",
    version,
    about = "Balancing-weight estimators of weighted average treatment effects"
)]
struct Cli {
    /// Worker threads for bootstrap and simulation replicates.
    #[arg(long, global = true, env = "EQUIPOISE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the models and report one estimate per weighting scheme.
    Estimate(EstimateArgs),
    /// Covariate balance and propensity overlap diagnostics.
    Balance(BalanceArgs),
    /// Run a replicated simulation study.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Treatment column (values 0/1).
    #[arg(long, default_value = "Z")]
    treat: String,
    /// Outcome column.
    #[arg(long, default_value = "Y")]
    outcome: String,
    /// Propensity model terms, e.g. "X1,X2,X1*X2,X1^2". Defaults to all
    /// covariates.
    #[arg(long)]
    ps_design: Option<String>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Outcome model terms, shared by both arms. Defaults to all covariates.
    #[arg(long)]
    outcome_design: Option<String>,
    /// Comma-separated schemes: IPW, ATT, ATC, TRIM(a), TRUNC(a), OW, MW, EW, BW(nu).
    #[arg(long, default_value = "IPW,OW")]
    schemes: String,
    /// hajek, augmented or dr.
    #[arg(long, default_value = "hajek")]
    mode: String,
    /// sandwich, bootstrap or none.
    #[arg(long, default_value = "sandwich")]
    variance: String,
    #[arg(long, default_value_t = 1000)]
    bootstrap_reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV with one row per scheme.
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON bundle of estimates and diagnostics.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BalanceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "OW")]
    scheme: String,
    #[arg(long, default_value_t = 0.5)]
    rubin_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    rubin_hi: f64,
    /// Balance table CSV: name,smd_unweighted,smd_weighted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overlap summary CSV.
    #[arg(long)]
    overlap_output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// dgp1, dgp2 or illustrative.
    #[arg(long)]
    dgp: String,
    /// good, moderate or poor (dgp1, dgp2).
    #[arg(long)]
    overlap: Option<String>,
    /// medium or low (dgp2).
    #[arg(long)]
    prevalence: Option<String>,
    /// A, B or C (illustrative).
    #[arg(long)]
    scenario: Option<String>,
    /// homo or hetero (dgp1, dgp2).
    #[arg(long)]
    effect: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long, default_value = "hajek")]
    mode: String,
    /// none, ps, outcome or both: drop X1 from the named working model(s).
    #[arg(long, default_value = "none")]
    misspec: String,
    /// Superpopulation size for the true values.
    #[arg(long, default_value_t = 1_000_000)]
    superpop: usize,
    /// Only compute the true estimands.
    #[arg(long)]
    truth_only: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run manifest; defaults to <output>.manifest.json.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Usage text shown after configuration errors.
pub fn usage() -> String {
    Cli::command().render_usage().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = run::configure_threads(cli.threads) {
        return run::report_error(&e);
    }
    let result = match cli.command {
        Command::Estimate(a) => run::estimate(a),
        Command::Balance(a) => run::balance(a),
        Command::Simulate(a) => run::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => run::report_error(&e),
    }
}
