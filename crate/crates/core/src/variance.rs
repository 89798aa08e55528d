//! Sandwich variances from stacked estimating equations, and the
//! nonparametric bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{logistic, FittedOutcome, FittedPropensity};
use crate::linalg;
use crate::par::{self, Execution};
use crate::scheme::WeightScheme;
use crate::weights::{self, WeightSet};

/// Stacked estimating equations Σ_i ψ(O_i; θ) = 0 with target τ = c'θ.
pub trait EstimatingStack: Sync {
    fn n_units(&self) -> usize;
    fn theta_hat(&self) -> &DVector<f64>;
    fn contrast(&self) -> DVector<f64>;
    /// ψ for unit `i` at an arbitrary θ.
    fn psi(&self, i: usize, theta: &DVector<f64>) -> DVector<f64>;
    /// A_N = −N⁻¹ Σ ∂ψ_i/∂θ' at θ̂, from closed-form derivatives.
    fn analytic_bread(&self) -> Result<DMatrix<f64>>;

    fn dim(&self) -> usize {
        self.theta_hat().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichResult {
    pub a_n: DMatrix<f64>,
    pub b_n: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub variance: f64,
    pub se: f64,
}

/// B_N = N⁻¹ Σ ψψ' at θ̂.
pub fn meat<S: EstimatingStack + ?Sized>(stack: &S) -> DMatrix<f64> {
    let k = stack.dim();
    let theta = stack.theta_hat();
    let mut b = DMatrix::zeros(k, k);
    for i in 0..stack.n_units() {
        let p = stack.psi(i, theta);
        b.ger(1.0, &p, &p, 1.0);
    }
    b / stack.n_units() as f64
}

/// Sandwich with a caller-supplied bread, e.g. a numerical Jacobian.
pub fn sandwich_with_bread<S: EstimatingStack + ?Sized>(
    stack: &S,
    a_n: DMatrix<f64>,
) -> Result<SandwichResult> {
    let b_n = meat(stack);
    // Rescaling row j of A_N and of ψ by the same factor leaves A⁻¹B A⁻ᵀ
    // unchanged; it keeps tiny weight scales (large ν) from tripping the
    // condition check.
    let k = a_n.nrows();
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let d = a_n[(j, j)].abs();
            if d > 0.0 && d.is_finite() {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let a_s = DMatrix::from_fn(k, k, |i, j| a_n[(i, j)] * scale[i]);
    let b_s = DMatrix::from_fn(k, k, |i, j| b_n[(i, j)] * scale[i] * scale[j]);
    let a_inv = linalg::checked_inverse(&a_s)?;
    let sigma = &a_inv * b_s * a_inv.transpose();
    let c = stack.contrast();
    let variance = ((c.transpose() * &sigma * &c)[(0, 0)] / stack.n_units() as f64).max(0.0);
    Ok(SandwichResult {
        a_n,
        b_n,
        sigma,
        variance,
        se: variance.sqrt(),
    })
}

pub fn sandwich<S: EstimatingStack + ?Sized>(stack: &S) -> Result<SandwichResult> {
    let a = stack.analytic_bread()?;
    sandwich_with_bread(stack, a)
}

fn require_smooth(scheme: WeightScheme) -> Result<()> {
    if scheme.is_smooth() {
        Ok(())
    } else {
        Err(Error::UnsupportedScheme {
            scheme: scheme.to_string(),
            reason: "no sandwich for indicator-based weights; use the bootstrap",
        })
    }
}

fn eta_at(v: &DMatrix<f64>, i: usize, beta: &[f64]) -> f64 {
    v.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// θ = (β, μ₁, μ₀) with ψ = [(Z−e)V; Z·w₁(Y−μ₁); (1−Z)·w₀(Y−μ₀)].
pub struct HajekStack<'a> {
    ds: &'a Dataset,
    v: &'a DMatrix<f64>,
    scheme: WeightScheme,
    theta: DVector<f64>,
}

impl<'a> HajekStack<'a> {
    pub fn new(ds: &'a Dataset, fp: &'a FittedPropensity, ws: &WeightSet) -> Result<Self> {
        require_smooth(ws.scheme)?;
        check_rows(ds, &fp.design)?;
        let (mu1, mu0) = crate::estimators::hajek_means(ws, ds)?;
        let p = fp.coefficients.len();
        let mut theta = DVector::zeros(p + 2);
        theta.rows_mut(0, p).copy_from(&fp.coefficients);
        theta[p] = mu1;
        theta[p + 1] = mu0;
        Ok(Self {
            ds,
            v: &fp.design,
            scheme: ws.scheme,
            theta,
        })
    }

    fn p(&self) -> usize {
        self.v.ncols()
    }
}

fn check_rows(ds: &Dataset, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != ds.n_units() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows for {} units",
            m.nrows(),
            ds.n_units()
        )));
    }
    Ok(())
}

fn w_or_nan(scheme: WeightScheme, e: f64, z: u8) -> f64 {
    weights::weight_wz(scheme, e, z).unwrap_or(f64::NAN)
}

impl EstimatingStack for HajekStack<'_> {
    fn n_units(&self) -> usize {
        self.ds.n_units()
    }

    fn theta_hat(&self) -> &DVector<f64> {
        &self.theta
    }

    fn contrast(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.p() + 2);
        c[self.p()] = 1.0;
        c[self.p() + 1] = -1.0;
        c
    }

    fn psi(&self, i: usize, theta: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let e = logistic(eta_at(self.v, i, &theta.as_slice()[..p]));
        let zi = self.ds.treatment()[i];
        let z = f64::from(zi);
        let y = self.ds.outcome()[i];
        let mut out = DVector::zeros(p + 2);
        for j in 0..p {
            out[j] = (z - e) * self.v[(i, j)];
        }
        if zi == 1 {
            out[p] = w_or_nan(self.scheme, e, 1) * (y - theta[p]);
        } else {
            out[p + 1] = w_or_nan(self.scheme, e, 0) * (y - theta[p + 1]);
        }
        out
    }

    fn analytic_bread(&self) -> Result<DMatrix<f64>> {
        let p = self.p();
        let n = self.ds.n_units();
        let beta = &self.theta.as_slice()[..p];
        let (mu1, mu0) = (self.theta[p], self.theta[p + 1]);
        let mut a = DMatrix::zeros(p + 2, p + 2);
        for i in 0..n {
            let e = logistic(eta_at(self.v, i, beta));
            let row = self.v.row(i).transpose();
            a.view_mut((0, 0), (p, p))
                .ger(e * (1.0 - e), &row, &row, 1.0);
            let y = self.ds.outcome()[i];
            if self.ds.treatment()[i] == 1 {
                let dw = weights::weight_dw_deta(self.scheme, e, 1)?;
                let w = weights::weight_wz(self.scheme, e, 1)?;
                for j in 0..p {
                    a[(p, j)] -= dw * (y - mu1) * row[j];
                }
                a[(p, p)] += w;
            } else {
                let dw = weights::weight_dw_deta(self.scheme, e, 0)?;
                let w = weights::weight_wz(self.scheme, e, 0)?;
                for j in 0..p {
                    a[(p + 1, j)] -= dw * (y - mu0) * row[j];
                }
                a[(p + 1, p + 1)] += w;
            }
        }
        Ok(a / n as f64)
    }
}

/// How the regression term of the augmented estimator is weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressionWeighting {
    /// ĝ/Σĝ, depending on β through the propensity score.
    Selection,
    /// (a + bZ)/Σ(a + bZ) for affine g; free of β.
    Affine { a: f64, b: f64 },
}

/// θ = (β, α₁, α₀, τ₁, τ₀, μ₁, μ₀) for the augmented and doubly robust
/// estimators. Both arms share the outcome design W.
pub struct AugmentedStack<'a> {
    ds: &'a Dataset,
    v: &'a DMatrix<f64>,
    w: &'a DMatrix<f64>,
    scheme: WeightScheme,
    weighting: RegressionWeighting,
    theta: DVector<f64>,
}

impl<'a> AugmentedStack<'a> {
    pub fn new(
        ds: &'a Dataset,
        fp: &'a FittedPropensity,
        of: &'a FittedOutcome,
        ws: &WeightSet,
        weighting: RegressionWeighting,
    ) -> Result<Self> {
        require_smooth(ws.scheme)?;
        check_rows(ds, &fp.design)?;
        check_rows(ds, &of.design)?;
        let p = fp.coefficients.len();
        let k = of.coefficients_treated.len();
        let mut theta = DVector::zeros(p + 2 * k + 4);
        theta.rows_mut(0, p).copy_from(&fp.coefficients);
        theta.rows_mut(p, k).copy_from(&of.coefficients_treated);
        theta.rows_mut(p + k, k).copy_from(&of.coefficients_control);
        let mut stack = Self {
            ds,
            v: &fp.design,
            w: &of.design,
            scheme: ws.scheme,
            weighting,
            theta,
        };
        let n = ds.n_units();
        let h: Vec<f64> = (0..n).map(|i| stack.h(i, fp.scores[i])).collect();
        let hs: f64 = h.iter().sum();
        if !(hs > 0.0) {
            return Err(Error::AllZeroSelection);
        }
        let y = ds.outcome();
        let (mut t1, mut t0, mut r1, mut r0) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            t1 += h[i] * of.fitted_m1[i];
            t0 += h[i] * of.fitted_m0[i];
            if ds.treatment()[i] == 1 {
                r1 += ws.norm_w1[i] * (y[i] - of.fitted_m1[i]);
            } else {
                r0 += ws.norm_w0[i] * (y[i] - of.fitted_m0[i]);
            }
        }
        let base = p + 2 * k;
        stack.theta[base] = t1 / hs;
        stack.theta[base + 1] = t0 / hs;
        stack.theta[base + 2] = r1;
        stack.theta[base + 3] = r0;
        Ok(stack)
    }

    fn p(&self) -> usize {
        self.v.ncols()
    }

    fn k(&self) -> usize {
        self.w.ncols()
    }

    fn h(&self, i: usize, e: f64) -> f64 {
        match self.weighting {
            RegressionWeighting::Selection => weights::selection_g(self.scheme, e),
            RegressionWeighting::Affine { a, b } => a + b * self.ds.z(i),
        }
    }

    fn dh_deta(&self, e: f64) -> Result<f64> {
        match self.weighting {
            RegressionWeighting::Selection => weights::selection_dg_deta(self.scheme, e),
            RegressionWeighting::Affine { .. } => Ok(0.0),
        }
    }

    fn fitted(&self, i: usize, alpha: &[f64]) -> f64 {
        self.w.row(i).iter().zip(alpha).map(|(a, b)| a * b).sum()
    }
}

impl EstimatingStack for AugmentedStack<'_> {
    fn n_units(&self) -> usize {
        self.ds.n_units()
    }

    fn theta_hat(&self) -> &DVector<f64> {
        &self.theta
    }

    fn contrast(&self) -> DVector<f64> {
        let base = self.p() + 2 * self.k();
        let mut c = DVector::zeros(base + 4);
        c[base] = 1.0;
        c[base + 1] = -1.0;
        c[base + 2] = 1.0;
        c[base + 3] = -1.0;
        c
    }

    fn psi(&self, i: usize, theta: &DVector<f64>) -> DVector<f64> {
        let (p, k) = (self.p(), self.k());
        let th = theta.as_slice();
        let e = logistic(eta_at(self.v, i, &th[..p]));
        let zi = self.ds.treatment()[i];
        let z = f64::from(zi);
        let y = self.ds.outcome()[i];
        let m1 = self.fitted(i, &th[p..p + k]);
        let m0 = self.fitted(i, &th[p + k..p + 2 * k]);
        let base = p + 2 * k;
        let h = self.h(i, e);
        let mut out = DVector::zeros(base + 4);
        for j in 0..p {
            out[j] = (z - e) * self.v[(i, j)];
        }
        if zi == 1 {
            for j in 0..k {
                out[p + j] = self.w[(i, j)] * (y - m1);
            }
            out[base + 2] = w_or_nan(self.scheme, e, 1) * (y - m1 - th[base + 2]);
        } else {
            for j in 0..k {
                out[p + k + j] = self.w[(i, j)] * (y - m0);
            }
            out[base + 3] = w_or_nan(self.scheme, e, 0) * (y - m0 - th[base + 3]);
        }
        out[base] = h * (m1 - th[base]);
        out[base + 1] = h * (m0 - th[base + 1]);
        out
    }

    fn analytic_bread(&self) -> Result<DMatrix<f64>> {
        let (p, k) = (self.p(), self.k());
        let n = self.ds.n_units();
        let th = self.theta.as_slice();
        let base = p + 2 * k;
        let (t1, t0, mu1, mu0) = (th[base], th[base + 1], th[base + 2], th[base + 3]);
        let mut a = DMatrix::zeros(base + 4, base + 4);
        for i in 0..n {
            let e = logistic(eta_at(self.v, i, &th[..p]));
            let vr = self.v.row(i).transpose();
            let wr = self.w.row(i).transpose();
            let y = self.ds.outcome()[i];
            let m1 = self.fitted(i, &th[p..p + k]);
            let m0 = self.fitted(i, &th[p + k..base]);
            let h = self.h(i, e);
            let dh = self.dh_deta(e)?;

            a.view_mut((0, 0), (p, p)).ger(e * (1.0 - e), &vr, &vr, 1.0);
            for j in 0..p {
                a[(base, j)] -= dh * (m1 - t1) * vr[j];
                a[(base + 1, j)] -= dh * (m0 - t0) * vr[j];
            }
            for j in 0..k {
                a[(base, p + j)] -= h * wr[j];
                a[(base + 1, p + k + j)] -= h * wr[j];
            }
            a[(base, base)] += h;
            a[(base + 1, base + 1)] += h;

            if self.ds.treatment()[i] == 1 {
                a.view_mut((p, p), (k, k)).ger(1.0, &wr, &wr, 1.0);
                let w = weights::weight_wz(self.scheme, e, 1)?;
                let dw = weights::weight_dw_deta(self.scheme, e, 1)?;
                let r = y - m1 - mu1;
                for j in 0..p {
                    a[(base + 2, j)] -= dw * r * vr[j];
                }
                for j in 0..k {
                    a[(base + 2, p + j)] += w * wr[j];
                }
                a[(base + 2, base + 2)] += w;
            } else {
                a.view_mut((p + k, p + k), (k, k)).ger(1.0, &wr, &wr, 1.0);
                let w = weights::weight_wz(self.scheme, e, 0)?;
                let dw = weights::weight_dw_deta(self.scheme, e, 0)?;
                let r = y - m0 - mu0;
                for j in 0..p {
                    a[(base + 3, j)] -= dw * r * vr[j];
                }
                for j in 0..k {
                    a[(base + 3, p + k + j)] += w * wr[j];
                }
                a[(base + 3, base + 3)] += w;
            }
        }
        Ok(a / n as f64)
    }
}

/// Sandwich variance of the Hájek estimator with estimated propensity.
pub fn sandwich_hajek(
    ds: &Dataset,
    fp: &FittedPropensity,
    ws: &WeightSet,
) -> Result<SandwichResult> {
    sandwich(&HajekStack::new(ds, fp, ws)?)
}

/// Sandwich variance of the augmented (`Selection`) or doubly robust
/// (`Affine`) estimator.
pub fn sandwich_augmented(
    ds: &Dataset,
    fp: &FittedPropensity,
    of: &FittedOutcome,
    ws: &WeightSet,
    weighting: RegressionWeighting,
) -> Result<SandwichResult> {
    sandwich(&AugmentedStack::new(ds, fp, of, ws, weighting)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub se: f64,
    /// Estimates of the successful resamples, in resample order.
    pub replicates: Vec<f64>,
    pub n_failed: usize,
    /// Error kind of each failed resample, keyed by resample index.
    pub failures: Vec<(usize, &'static str)>,
}

/// Largest failed share of resamples tolerated.
pub const MAX_FAILED_SHARE: f64 = 0.2;

/// Unit-level i.i.d. resampling. `analysis` must re-run the whole pipeline.
pub fn bootstrap_variance<F>(
    ds: &Dataset,
    analysis: F,
    reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<f64> + Sync + Send,
{
    if reps < 2 {
        return Err(Error::Config("bootstrap needs at least 2 resamples".into()));
    }
    let n = ds.n_units();
    let outcomes = par::map_indices(reps, exec, |b| {
        let mut rng = par::replicate_rng(seed, b as u64);
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        ds.select_rows(&rows).and_then(|d| analysis(&d))
    });
    let mut replicates = Vec::with_capacity(reps);
    let mut failures = Vec::new();
    for (b, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(t) if t.is_finite() => replicates.push(t),
            Ok(_) => failures.push((b, "NonFiniteEstimate")),
            Err(e) => failures.push((b, e.kind())),
        }
    }
    let n_failed = failures.len();
    if n_failed as f64 > MAX_FAILED_SHARE * reps as f64 || replicates.len() < 2 {
        return Err(Error::TooManyFailedResamples {
            failed: n_failed,
            total: reps,
        });
    }
    Ok(BootstrapResult {
        se: sample_sd(&replicates),
        replicates,
        n_failed,
        failures,
    })
}

/// Standard deviation with the n − 1 denominator.
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
