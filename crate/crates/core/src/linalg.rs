//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{FdrError, Result};

/// `XᵀX / n`.
pub fn sample_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x) / x.nrows() as f64
}

pub fn cholesky(a: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| FdrError::NotPositiveDefinite(what.to_string()))
}

/// Squared ratio of the extreme Cholesky pivots; a cheap lower bound on the
/// 2-norm condition number.
pub fn cholesky_condition(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        (hi / lo).powi(2)
    }
}

pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(cholesky(a, what)?.inverse())
}

/// Copy of `x` without column `j`.
pub fn without_column(x: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    x.clone().remove_column(j)
}

/// Copy of `v` without entry `j`.
pub fn without_entry(v: &DVector<f64>, j: usize) -> DVector<f64> {
    v.clone().remove_row(j)
}

pub fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn inverse_and_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&a, "a").unwrap();
        let id = &a * &inv;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        let c = cholesky(&a, "a").unwrap();
        assert!(cholesky_condition(&c) >= 1.0);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_inverse(&singular, "s").is_err());
    }
}
