//! Dense linear-algebra helpers with explicit rank and conditioning checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a matrix is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Condition estimate above which a bread matrix is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Full column rank test by column-pivoted QR.
pub fn has_full_column_rank(m: &DMatrix<f64>) -> bool {
    if m.ncols() == 0 {
        return true;
    }
    if m.nrows() < m.ncols() {
        return false;
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..m.ncols()).map(|k| r[(k, k)].abs()).collect();
    let top = diag.iter().cloned().fold(0.0, f64::max);
    top > 0.0 && diag.iter().all(|&d| d > RANK_TOL * top)
}

/// Least squares by Householder QR. Rank is checked first.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if !has_full_column_rank(x) {
        return Err(Error::SingularDesign);
    }
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign)
}

/// Solve a symmetric positive definite system by Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a.clone().cholesky().ok_or(Error::SingularDesign)?;
    Ok(chol.solve(b))
}

/// 2-norm condition number from singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse by LU after a condition check.
pub fn checked_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(a);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularBread { condition });
    }
    a.clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularBread { condition })
}
