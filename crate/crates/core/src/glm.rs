//! Logistic propensity model and per-arm linear outcome models.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// Linear predictor magnitude taken as evidence of separation.
pub const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Column(String),
    Product(String, String),
    Square(String),
}

impl Term {
    fn columns(&self) -> Vec<&str> {
        match self {
            Term::Column(a) | Term::Square(a) => vec![a],
            Term::Product(a, b) => vec![a, b],
        }
    }

    pub fn references(&self, name: &str) -> bool {
        self.columns().contains(&name)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Column(a) => f.write_str(a),
            Term::Product(a, b) => write!(f, "{a}*{b}"),
            Term::Square(a) => write!(f, "{a}^2"),
        }
    }
}

/// `X1`, `X1*X2` or `X1^2`.
impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse design term `{s}`"));
        if let Some(base) = s.strip_suffix("^2") {
            let base = base.trim();
            return if base.is_empty() {
                Err(bad())
            } else {
                Ok(Term::Square(base.to_owned()))
            };
        }
        if let Some((a, b)) = s.split_once('*') {
            let (a, b) = (a.trim(), b.trim());
            if a.is_empty() || b.is_empty() || b.contains('*') {
                return Err(bad());
            }
            return Ok(if a == b {
                Term::Square(a.to_owned())
            } else {
                Term::Product(a.to_owned(), b.to_owned())
            });
        }
        if s.is_empty() {
            Err(bad())
        } else {
            Ok(Term::Column(s.to_owned()))
        }
    }
}

/// Ordered model terms; the intercept is always prepended.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DesignSpec {
    pub terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn intercept_only() -> Self {
        Self::default()
    }

    /// Main effects of every covariate, in dataset order.
    pub fn main_effects(ds: &Dataset) -> Self {
        Self::columns(ds.covariate_names())
    }

    pub fn columns<S: AsRef<str>>(names: &[S]) -> Self {
        Self::new(
            names
                .iter()
                .map(|n| Term::Column(n.as_ref().to_owned()))
                .collect(),
        )
    }

    /// Comma-separated term list.
    pub fn parse(list: &str) -> Result<Self> {
        if list.trim().is_empty() {
            return Ok(Self::intercept_only());
        }
        list.split(',')
            .map(str::parse)
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    /// Drops every term that touches `column`.
    pub fn without(&self, column: &str) -> Self {
        Self::new(
            self.terms
                .iter()
                .filter(|t| !t.references(column))
                .cloned()
                .collect(),
        )
    }

    /// Column labels of the built matrix, intercept first.
    pub fn labels(&self) -> Vec<String> {
        std::iter::once("(Intercept)".to_owned())
            .chain(self.terms.iter().map(Term::to_string))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.terms.len() + 1
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(Term::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

pub fn build_design(ds: &Dataset, spec: &DesignSpec) -> Result<DMatrix<f64>> {
    let n = ds.n_units();
    let x = ds.covariates();
    let index = |name: &str| {
        ds.covariate_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    };
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for term in &spec.terms {
        let col = match term {
            Term::Column(a) => {
                let j = index(a)?;
                x.column(j).iter().copied().collect()
            }
            Term::Square(a) => {
                let j = index(a)?;
                x.column(j).iter().map(|v| v * v).collect()
            }
            Term::Product(a, b) => {
                let (ja, jb) = (index(a)?, index(b)?);
                (0..n).map(|i| x[(i, ja)] * x[(i, jb)]).collect()
            }
        };
        cols.push(col);
    }
    Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
}

/// Numerically safe logistic function.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let ex = x.exp();
        ex / (1.0 + ex)
    }
}

/// Bernoulli log-likelihood at linear predictor `eta`.
pub fn log_likelihood(eta: &DVector<f64>, z: &[u8]) -> f64 {
    eta.iter()
        .zip(z)
        .map(|(&h, &t)| {
            let log1p_exp = h.max(0.0) + (-h.abs()).exp().ln_1p();
            f64::from(t) * h - log1p_exp
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPropensity {
    pub coefficients: DVector<f64>,
    pub design_spec: DesignSpec,
    /// The n × (1+q) design V the model was fitted on.
    pub design: DMatrix<f64>,
    pub scores: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
    /// Log-likelihood after each accepted iterate, starting at β = 0.
    pub loglik_path: Vec<f64>,
}

impl FittedPropensity {
    /// Wraps externally known scores, e.g. true propensities in simulation
    /// or a fixed-score fixture. The design is intercept-only.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let n = scores.len();
        Self {
            coefficients: DVector::zeros(1),
            design_spec: DesignSpec::intercept_only(),
            design: DMatrix::from_element(n, 1, 1.0),
            scores,
            converged: true,
            iterations: 0,
            score_norm: 0.0,
            loglik_path: Vec::new(),
        }
    }
}

fn score_vector(v: &DMatrix<f64>, z: &[u8], e: &[f64]) -> DVector<f64> {
    let resid = DVector::from_iterator(e.len(), z.iter().zip(e).map(|(&t, &p)| f64::from(t) - p));
    v.tr_mul(&resid)
}

/// Maximum likelihood by Newton/IRLS with step halving.
pub fn fit_logistic(v: &DMatrix<f64>, z: &[u8], opts: LogisticOptions) -> Result<FittedPropensity> {
    let n = v.nrows();
    let p = v.ncols();
    if z.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows, treatment {}",
            z.len()
        )));
    }
    let n1 = z.iter().filter(|&&t| t == 1).count();
    if n1 == 0 || n1 == n {
        return Err(Error::DegenerateTreatment);
    }
    if !linalg::has_full_column_rank(v) {
        return Err(Error::SingularDesign);
    }

    let mut beta = DVector::zeros(p);
    let mut eta = v * &beta;
    let mut ll = log_likelihood(&eta, z);
    let mut path = vec![ll];
    let mut e: Vec<f64> = eta.iter().map(|&h| logistic(h)).collect();
    let mut iterations = 0;
    loop {
        let score = score_vector(v, z, &e);
        let norm = score.amax();
        if norm <= opts.tol {
            return Ok(FittedPropensity {
                coefficients: beta,
                design_spec: DesignSpec::default(),
                design: v.clone(),
                scores: e,
                converged: true,
                iterations,
                score_norm: norm,
                loglik_path: path,
            });
        }
        let diverged = eta.amax() > SEPARATION_ETA;
        if diverged || iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                score_norm: norm,
                last_coefficients: beta.iter().copied().collect(),
            });
        }
        iterations += 1;

        let mut info = DMatrix::zeros(p, p);
        for (i, &ei) in e.iter().enumerate() {
            let w = ei * (1.0 - ei);
            let row = v.row(i);
            info.ger(w, &row.transpose(), &row.transpose(), 1.0);
        }
        let step = match linalg::solve_spd(&info, &score) {
            Ok(s) => s,
            Err(_) => {
                return Err(Error::NonConvergence {
                    iterations,
                    score_norm: norm,
                    last_coefficients: beta.iter().copied().collect(),
                })
            }
        };

        // Near the optimum the likelihood change is below rounding; a tiny
        // slack keeps the full Newton step there.
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &beta + &step * t;
            let cand_eta = v * &cand;
            let cand_ll = log_likelihood(&cand_eta, z);
            if cand_ll >= ll - slack {
                beta = cand;
                eta = cand_eta;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No ascent direction left at working precision.
            return Err(Error::NonConvergence {
                iterations,
                score_norm: norm,
                last_coefficients: beta.iter().copied().collect(),
            });
        }
        path.push(ll);
        e = eta.iter().map(|&h| logistic(h)).collect();
    }
}

/// Builds V from `spec` and fits the propensity model.
pub fn fit_propensity(
    ds: &Dataset,
    spec: &DesignSpec,
    opts: LogisticOptions,
) -> Result<FittedPropensity> {
    let v = build_design(ds, spec)?;
    let mut fp = fit_logistic(&v, ds.treatment(), opts)?;
    fp.design_spec = spec.clone();
    Ok(fp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedOutcome {
    pub coefficients_treated: DVector<f64>,
    pub coefficients_control: DVector<f64>,
    pub design_spec: DesignSpec,
    /// The n × (1+q) design W shared by both arms.
    pub design: DMatrix<f64>,
    pub fitted_m1: Vec<f64>,
    pub fitted_m0: Vec<f64>,
}

fn fit_arm(w: &DMatrix<f64>, y: &[f64], z: &[u8], arm: u8) -> Result<DVector<f64>> {
    let rows: Vec<usize> = (0..z.len()).filter(|&i| z[i] == arm).collect();
    if rows.len() < w.ncols() {
        return Err(Error::ArmTooSmall {
            arm,
            n: rows.len(),
            required: w.ncols(),
        });
    }
    let wz = w.select_rows(rows.iter());
    let yz = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    linalg::least_squares(&wz, &yz)
}

/// Per-arm ordinary least squares; fitted values for every unit.
pub fn fit_outcome(w: &DMatrix<f64>, y: &[f64], z: &[u8]) -> Result<FittedOutcome> {
    if y.len() != w.nrows() || z.len() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, outcome {}, treatment {}",
            w.nrows(),
            y.len(),
            z.len()
        )));
    }
    let a1 = fit_arm(w, y, z, 1)?;
    let a0 = fit_arm(w, y, z, 0)?;
    let m1 = (w * &a1).iter().copied().collect();
    let m0 = (w * &a0).iter().copied().collect();
    Ok(FittedOutcome {
        coefficients_treated: a1,
        coefficients_control: a0,
        design_spec: DesignSpec::default(),
        design: w.clone(),
        fitted_m1: m1,
        fitted_m0: m0,
    })
}

pub fn fit_outcome_model(ds: &Dataset, spec: &DesignSpec) -> Result<FittedOutcome> {
    let w = build_design(ds, spec)?;
    let mut fo = fit_outcome(&w, ds.outcome(), ds.treatment())?;
    fo.design_spec = spec.clone();
    Ok(fo)
}

/// Per-unit contributions (Z_i − e_i)V_i, one row per unit.
pub fn logistic_score(v: &DMatrix<f64>, z: &[u8], beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    if z.len() != v.nrows() || beta.len() != v.ncols() {
        return Err(Error::DimensionMismatch("logistic_score".into()));
    }
    let eta = v * beta;
    let mut out = v.clone();
    for i in 0..v.nrows() {
        let r = f64::from(z[i]) - logistic(eta[i]);
        out.row_mut(i).scale_mut(r);
    }
    Ok(out)
}

/// Per-unit contributions 1{Z_i=z}·W_i(Y_i − W_i'α), one row per unit.
pub fn outcome_score(
    w: &DMatrix<f64>,
    y: &[f64],
    z: &[u8],
    alpha: &DVector<f64>,
    arm: u8,
) -> Result<DMatrix<f64>> {
    if y.len() != w.nrows() || z.len() != w.nrows() || alpha.len() != w.ncols() {
        return Err(Error::DimensionMismatch("outcome_score".into()));
    }
    let fitted = w * alpha;
    let mut out = w.clone();
    for i in 0..w.nrows() {
        let r = if z[i] == arm { y[i] - fitted[i] } else { 0.0 };
        out.row_mut(i).scale_mut(r);
    }
    Ok(out)
}
