//! One-step debiased Lasso estimators and their standard errors.

use nalgebra::{DMatrix, DVector};

use super::lasso::LassoFit;
use super::nodewise::PrecisionEstimate;
use crate::error::{FdrError, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedFit {
    pub beta_d: DVector<f64>,
    pub sigma_hat: DVector<f64>,
    pub lasso: LassoFit,
    pub precision: PrecisionEstimate,
}

impl DebiasedFit {
    /// Normalized estimates `β̂ᵈ_j / σ̂_j`.
    pub fn normalized(&self) -> DVector<f64> {
        self.beta_d.component_div(&self.sigma_hat)
    }
}

impl PrecisionEstimate {
    /// Wraps an arbitrary decorrelating matrix, deriving `τ̂²` and `γ̂` so that
    /// `reconstruct` returns it unchanged up to rounding.
    pub fn from_matrix(theta: DMatrix<f64>) -> Result<Self> {
        let p = theta.nrows();
        if theta.ncols() != p {
            return Err(FdrError::InvalidInput("decorrelating matrix must be square".into()));
        }
        let mut tau_sq = DVector::zeros(p);
        let mut gammas = Vec::with_capacity(p);
        for j in 0..p {
            let d = theta[(j, j)];
            if !(d > 0.0) {
                return Err(FdrError::TauNonpositive { feature: j, value: 1.0 / d });
            }
            tau_sq[j] = 1.0 / d;
            let g = DVector::from_iterator(p - 1, (0..p).filter(|&k| k != j).map(|k| -theta[(j, k)] / d));
            gammas.push(g);
        }
        Ok(PrecisionEstimate { theta_hat: theta, tau_sq, gammas, lambdas: vec![0.0; p], converged: true })
    }
}

/// Rows of `x` scaled by `sqrt(ℓ̈(y_i, x_iᵀβ))`.
pub fn weighted_design(data: &Dataset, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = &data.x * beta;
    let mut xw = data.x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        let w = data.family.eval(data.y[i], eta[i]).ddot.max(0.0).sqrt();
        row *= w;
    }
    xw
}

fn check_shapes(x: &DMatrix<f64>, lasso: &LassoFit, prec: &PrecisionEstimate) -> Result<()> {
    let p = x.ncols();
    if lasso.beta_hat.len() != p || prec.theta_hat.shape() != (p, p) {
        return Err(FdrError::InvalidInput(format!(
            "shape mismatch: design has {p} columns, Lasso {} coefficients, precision {}x{}",
            lasso.beta_hat.len(),
            prec.theta_hat.nrows(),
            prec.theta_hat.ncols()
        )));
    }
    Ok(())
}

/// `σ̂_j² = (1/n) Σ_i (s_i (Θ̂ x_i)_j)²`, the diagonal of `Θ̂ [(1/n) Σ s_i² x_i x_iᵀ] Θ̂ᵀ`.
fn sandwich_sd(x: &DMatrix<f64>, theta: &DMatrix<f64>, scale: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    let n = x.nrows() as f64;
    let mut a = x * theta.transpose();
    if let Some(s) = scale {
        for (i, mut row) in a.row_iter_mut().enumerate() {
            row *= s[i];
        }
    }
    let mut sd = DVector::zeros(a.ncols());
    for (j, col) in a.column_iter().enumerate() {
        let v = col.norm_squared() / n;
        if !(v > 0.0) || !v.is_finite() {
            return Err(FdrError::SigmaNonpositive { feature: j, value: v });
        }
        sd[j] = v.sqrt();
    }
    Ok(sd)
}

/// `β̂ᵈ = β̂ + Θ̂Xᵀ(y − Xβ̂)/n`, `σ̂_j² = (Θ̂Σ̂Θ̂ᵀ)_jj`.
pub fn debias_linear(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lasso: &LassoFit,
    prec: &PrecisionEstimate,
) -> Result<DebiasedFit> {
    check_shapes(x, lasso, prec)?;
    if y.len() != x.nrows() {
        return Err(FdrError::InvalidInput("response length differs from design rows".into()));
    }
    let n = x.nrows() as f64;
    let theta = &prec.theta_hat;
    let resid = y - x * &lasso.beta_hat;
    let beta_d = &lasso.beta_hat + theta * (x.tr_mul(&resid) / n);
    let sigma_hat = sandwich_sd(x, theta, None)?;
    Ok(DebiasedFit { beta_d, sigma_hat, lasso: lasso.clone(), precision: prec.clone() })
}

/// `β̂ᵈ = β̂ − Θ̂ (1/n) Σ ℓ̇_i x_i` with the empirical sandwich variance.
/// The gaussian family is routed through [`debias_linear`].
pub fn debias_glm(data: &Dataset, lasso: &LassoFit, prec: &PrecisionEstimate) -> Result<DebiasedFit> {
    if data.family.is_gaussian() {
        return debias_linear(&data.x, &data.y, lasso, prec);
    }
    check_shapes(&data.x, lasso, prec)?;
    let n = data.n() as f64;
    let eta = &data.x * &lasso.beta_hat;
    let dots = DVector::from_fn(data.n(), |i, _| data.family.eval(data.y[i], eta[i]).dot);
    let theta = &prec.theta_hat;
    let beta_d = &lasso.beta_hat - theta * (data.x.tr_mul(&dots) / n);
    let sigma_hat = sandwich_sd(&data.x, theta, Some(&dots))?;
    Ok(DebiasedFit { beta_d, sigma_hat, lasso: lasso.clone(), precision: prec.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_covariance, sample_design, sample_response, CovarianceSpec, DesignScale};
    use crate::estimators::lasso::{fit_lasso, LassoOptions};
    use crate::estimators::mle::{fit_mle, MleOptions};
    use crate::estimators::nodewise::{node_wise_precision, NodewiseOptions};
    use crate::linalg;
    use crate::model::GlmFamily;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn fake_lasso(beta: DVector<f64>) -> LassoFit {
        LassoFit { beta_hat: beta, lambda: 1.0, kkt_violation: 0.0, active_set: vec![], converged: true, iterations: 0 }
    }

    #[test]
    fn orthonormal_design_identity_theta() {
        let n = 50;
        let raw = sample_design(n, &DMatrix::identity(5, 5), DesignScale::Unit, &mut substream(1, 0)).unwrap();
        let x = raw.qr().q() * (n as f64).sqrt();
        let y = DVector::from_fn(n, |i, _| (i as f64).sin());
        let prec = PrecisionEstimate::from_matrix(DMatrix::identity(5, 5)).unwrap();
        for b in [DVector::zeros(5), DVector::from_element(5, 3.0)] {
            let fit = debias_linear(&x, &y, &fake_lasso(b), &prec).unwrap();
            let expect = x.tr_mul(&y) / n as f64;
            assert!((&fit.beta_d - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn ols_start_is_a_fixed_point() {
        let mut rng = substream(2, 0);
        let x = sample_design(40, &DMatrix::identity(4, 4), DesignScale::Unit, &mut rng).unwrap();
        let y = DVector::from_fn(40, |_, _| StandardNormal.sample(&mut rng));
        let ols = x.tr_mul(&x).lu().solve(&x.tr_mul(&y)).unwrap();
        let prec = PrecisionEstimate::from_matrix(linalg::sample_gram(&x).try_inverse().unwrap()).unwrap();
        let fit = debias_linear(&x, &y, &fake_lasso(ols.clone()), &prec).unwrap();
        assert!((&fit.beta_d - ols).amax() < 1e-12);
    }

    #[test]
    fn decomposition_identity() {
        let mut rng = substream(3, 0);
        let (n, p) = (30, 12);
        let sigma = make_covariance(&CovarianceSpec::Toeplitz { r: 0.4 }, p).unwrap();
        let x = sample_design(n, &sigma, DesignScale::Unit, &mut rng).unwrap();
        let beta_star = DVector::from_fn(p, |j, _| if j < 3 { 1.0 } else { 0.0 });
        let eps = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let y = &x * &beta_star + &eps;
        let data = Dataset::new(x.clone(), y.clone(), GlmFamily::Gaussian).unwrap();
        let lasso = fit_lasso(&data, 0.2, &LassoOptions::default()).unwrap();
        let prec = node_wise_precision(&x, &[0.2; 12], None, &NodewiseOptions::default()).unwrap();
        let fit = debias_linear(&x, &y, &lasso, &prec).unwrap();

        let rn = (n as f64).sqrt();
        let theta = &prec.theta_hat;
        let z = theta * x.tr_mul(&eps) / rn;
        let delta = (theta * linalg::sample_gram(&x) - DMatrix::identity(p, p)) * (&beta_star - &lasso.beta_hat) * rn;
        let lhs = (&fit.beta_d - &beta_star) * rn;
        assert!((lhs - z - delta).amax() < 1e-10);
    }

    #[test]
    fn glm_gaussian_matches_linear() {
        let mut rng = substream(4, 0);
        let x = sample_design(30, &DMatrix::identity(8, 8), DesignScale::Unit, &mut rng).unwrap();
        let y = DVector::from_fn(30, |_, _| StandardNormal.sample(&mut rng));
        let data = Dataset::new(x.clone(), y.clone(), GlmFamily::Gaussian).unwrap();
        let lasso = fit_lasso(&data, 0.1, &LassoOptions::default()).unwrap();
        let prec = node_wise_precision(&x, &[0.1; 8], None, &NodewiseOptions::default()).unwrap();
        let a = debias_linear(&x, &y, &lasso, &prec).unwrap();
        let b = debias_glm(&data, &lasso, &prec).unwrap();
        assert!((&a.beta_d - &b.beta_d).amax() <= 1e-12);
        assert!((&a.sigma_hat - &b.sigma_hat).amax() <= 1e-12);
    }

    #[test]
    fn exact_mle_is_a_fixed_point() {
        let mut rng = substream(5, 0);
        let x = sample_design(200, &DMatrix::identity(4, 4), DesignScale::Unit, &mut rng).unwrap();
        let beta = DVector::from_vec(vec![0.8, -0.5, 0.0, 0.3]);
        let y = sample_response(&x, &beta, GlmFamily::Logistic, &mut rng).unwrap();
        let data = Dataset::new(x, y, GlmFamily::Logistic).unwrap();
        let mle = fit_mle(&data, &MleOptions::default()).unwrap();
        let xw = weighted_design(&data, &mle.beta_hat);
        let prec = PrecisionEstimate::from_matrix(linalg::sample_gram(&xw).try_inverse().unwrap()).unwrap();
        let fit = debias_glm(&data, &fake_lasso(mle.beta_hat.clone()), &prec).unwrap();
        assert!((&fit.beta_d - &mle.beta_hat).amax() < 1e-6);
    }

    #[test]
    fn logistic_debiasing_reduces_error() {
        let (n, p) = (200, 10);
        let mut closer = 0;
        let reps = 50;
        let mut gap = 0.0;
        for rep in 0..reps {
            let mut rng = substream(6, rep);
            let x = sample_design(n, &DMatrix::identity(p, p), DesignScale::Unit, &mut rng).unwrap();
            let beta = DVector::from_fn(p, |j, _| if j < 3 { 1.0 } else { 0.0 });
            let y = sample_response(&x, &beta, GlmFamily::Logistic, &mut rng).unwrap();
            let data = Dataset::new(x, y, GlmFamily::Logistic).unwrap();
            let lambda = 0.05;
            let lasso = fit_lasso(&data, lambda, &LassoOptions::default()).unwrap();
            let xw = weighted_design(&data, &lasso.beta_hat);
            let node = (2.0 * (p as f64).ln() / n as f64).sqrt();
            let prec = node_wise_precision(&xw, &vec![node; p], None, &NodewiseOptions::default()).unwrap();
            let fit = debias_glm(&data, &lasso, &prec).unwrap();
            let e_d = (&fit.beta_d - &beta).amax();
            let e_l = (&lasso.beta_hat - &beta).amax();
            gap += e_l - e_d;
            if e_d < e_l {
                closer += 1;
            }
        }
        assert!(gap > 0.0 && closer > reps / 2, "closer in {closer}/{reps}, gap {gap}");
    }

    #[test]
    fn from_matrix_round_trips() {
        let t = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, 0.25, 4.0]);
        let prec = PrecisionEstimate::from_matrix(t.clone()).unwrap();
        assert!((prec.reconstruct() - t).amax() < 1e-15);
        assert!(PrecisionEstimate::from_matrix(DMatrix::zeros(2, 2)).is_err());
    }
}
