//! Node-wise regressions: OLS conditional variances for the
//! moderate-dimensional selectors and the Lasso-based decorrelating matrix
//! for the debiased estimators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FdrError, Result};
use crate::linalg::{self, soft_threshold};
use crate::par;

/// How the conditional variances `τ_j² = Var(X_j | X_-j)` are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMethod {
    /// `RSS_j / (rows − p + 1)`.
    #[default]
    NodewiseOls,
    /// `1 / ((XᵀX/n)⁻¹)_jj`.
    SampleInverse,
}

/// Residual sum of squares of each column regressed on all the others.
pub fn nodewise_rss(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if p == 1 {
        return Ok(DVector::from_element(1, x.column(0).norm_squared()));
    }
    if n < p {
        return Err(FdrError::InsufficientSamples { half: n, p: p - 1 });
    }
    let gram = x.tr_mul(x);
    let chol = linalg::cholesky(&gram, "design Gram");
    let inv = match chol {
        Ok(c) if linalg::cholesky_condition(&c) < 1e14 => c.inverse(),
        _ => return Err(FdrError::RankDeficient { feature: most_collinear(x) }),
    };
    // RSS_j = 1 / [(XᵀX)⁻¹]_jj
    let rss = DVector::from_fn(p, |j, _| 1.0 / inv[(j, j)]);
    for j in 0..p {
        let scale = gram[(j, j)];
        if !(rss[j] > 1e-12 * scale) {
            return Err(FdrError::RankDeficient { feature: j });
        }
    }
    Ok(rss)
}

/// Column whose residual after projection on the others is smallest
/// relative to its norm. Slow path used only to label rank failures.
fn most_collinear(x: &DMatrix<f64>) -> usize {
    let mut worst = (0, f64::INFINITY);
    for j in 0..x.ncols() {
        let rest = linalg::without_column(x, j);
        let col = x.column(j).into_owned();
        let q = rest.qr().q();
        let resid = &col - &q * q.tr_mul(&col);
        let ratio = resid.norm() / col.norm().max(f64::MIN_POSITIVE);
        if ratio < worst.1 {
            worst = (j, ratio);
        }
    }
    worst.0
}

/// `τ̂_j² = RSS_j / denominator`.
pub fn node_wise_ols_tau(x: &DMatrix<f64>, denominator: f64) -> Result<DVector<f64>> {
    if !(denominator > 0.0) {
        return Err(FdrError::InvalidInput(format!(
            "conditional-variance denominator must be positive, got {denominator}"
        )));
    }
    Ok(nodewise_rss(x)? / denominator)
}

/// Conditional variances by the chosen method. For node-wise OLS the
/// denominator is `rows − p + 1`.
pub fn conditional_variances(x: &DMatrix<f64>, method: TauMethod) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    match method {
        TauMethod::NodewiseOls => node_wise_ols_tau(x, n as f64 - p as f64 + 1.0),
        TauMethod::SampleInverse => Ok(nodewise_rss(x)? / n as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodewiseOptions {
    pub tol: f64,
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for NodewiseOptions {
    fn default() -> Self {
        NodewiseOptions { tol: 1e-9, kkt_tol: 1e-6, max_sweeps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub theta_hat: DMatrix<f64>,
    pub tau_sq: DVector<f64>,
    /// `γ̂_j`, length `p − 1`, indexed over the features other than `j`.
    pub gammas: Vec<DVector<f64>>,
    pub lambdas: Vec<f64>,
    /// Whether every node-wise Lasso met its KKT tolerance.
    pub converged: bool,
}

impl PrecisionEstimate {
    /// Rebuilds `Θ̂ = diag(τ̂²)⁻¹ Ĉ` from the stored node-wise parts.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let p = self.tau_sq.len();
        let mut theta = DMatrix::zeros(p, p);
        for j in 0..p {
            theta[(j, j)] = 1.0 / self.tau_sq[j];
            for (slot, k) in (0..p).filter(|&k| k != j).enumerate() {
                theta[(j, k)] = -self.gammas[j][slot] / self.tau_sq[j];
            }
        }
        theta
    }
}

/// Lasso of column `j` on the others, expressed through the Gram matrix
/// `G = XᵀX/n`: minimizes `½G_jj − G_j,-j γ + ½γᵀG_-j,-j γ + λ‖γ‖₁`.
/// Returns a length-`p` coefficient vector with a structural zero at `j`.
pub(crate) fn gram_lasso(gram: &DMatrix<f64>, j: usize, lambda: f64, opts: &NodewiseOptions) -> (DVector<f64>, bool) {
    let p = gram.nrows();
    let mut gamma = DVector::zeros(p);
    // c_k = G_jk − Σ_l G_kl γ_l, the correlation of column k with the residual.
    let mut c: DVector<f64> = gram.column(j).into_owned();
    let coords: Vec<usize> = (0..p).filter(|&k| k != j).collect();

    let update = |k: usize, gamma: &mut DVector<f64>, c: &mut DVector<f64>| -> f64 {
        let a = gram[(k, k)];
        if a <= 0.0 {
            return 0.0;
        }
        let old = gamma[k];
        let new = soft_threshold(c[k] + a * old, lambda) / a;
        let delta = new - old;
        if delta != 0.0 {
            gamma[k] = new;
            c.axpy(-delta, &gram.column(k), 1.0);
        }
        delta.abs()
    };
    let kkt = |gamma: &DVector<f64>, c: &DVector<f64>| -> f64 {
        coords
            .iter()
            .map(|&k| {
                let g = -c[k];
                let b = gamma[k];
                if b > 0.0 {
                    (g + lambda).abs()
                } else if b < 0.0 {
                    (g - lambda).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    };

    let mut tol = opts.tol;
    let mut sweeps = 0;
    loop {
        while sweeps < opts.max_sweeps {
            let change = coords.iter().fold(0.0f64, |m, &k| m.max(update(k, &mut gamma, &mut c)));
            sweeps += 1;
            if change <= tol {
                break;
            }
            let active: Vec<usize> = coords.iter().copied().filter(|&k| gamma[k] != 0.0).collect();
            while sweeps < opts.max_sweeps {
                let change = active.iter().fold(0.0f64, |m, &k| m.max(update(k, &mut gamma, &mut c)));
                sweeps += 1;
                if change <= tol {
                    break;
                }
            }
        }
        // refresh c to shed accumulated rounding
        c = gram.column(j) - gram * &gamma;
        if kkt(&gamma, &c) <= opts.kkt_tol {
            return (gamma, true);
        }
        if sweeps >= opts.max_sweeps || tol < 1e-15 {
            return (gamma, false);
        }
        tol *= 0.1;
    }
}

/// Node-wise Lasso decorrelating matrix for the (possibly weighted) design
/// `xw`.
///
/// `τ̂_j² = (xw_j − xw_-j γ̂_j)ᵀ v_j / n` where `v_j` is `xw_j`, or column `j`
/// of `cross` when given (the unweighted-design variant of the GLM branch).
pub fn node_wise_precision(
    xw: &DMatrix<f64>,
    lambdas: &[f64],
    cross: Option<&DMatrix<f64>>,
    opts: &NodewiseOptions,
) -> Result<PrecisionEstimate> {
    let (n, p) = xw.shape();
    if lambdas.len() != p {
        return Err(FdrError::InvalidInput(format!("expected {p} node penalties, got {}", lambdas.len())));
    }
    if let Some(&bad) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(FdrError::InvalidInput(format!("node penalties must be positive, got {bad}")));
    }
    if let Some(v) = cross {
        if v.shape() != xw.shape() {
            return Err(FdrError::InvalidInput("cross-product design must match the weighted design".into()));
        }
    }
    let gram = linalg::sample_gram(xw);
    let cross_gram = cross.map(|v| xw.tr_mul(v) / n as f64);

    let nodes: Vec<(DVector<f64>, bool)> = par::map_indexed(p, |j| gram_lasso(&gram, j, lambdas[j], opts));

    let mut theta = DMatrix::zeros(p, p);
    let mut tau_sq = DVector::zeros(p);
    let mut gammas = Vec::with_capacity(p);
    let mut converged = true;
    for (j, (gamma, ok)) in nodes.into_iter().enumerate() {
        converged &= ok;
        let cg = cross_gram.as_ref().unwrap_or(&gram);
        let tau = cg[(j, j)] - (0..p).filter(|&k| k != j).map(|k| gamma[k] * cg[(k, j)]).sum::<f64>();
        if !(tau > 0.0) {
            return Err(FdrError::TauNonpositive { feature: j, value: tau });
        }
        tau_sq[j] = tau;
        for k in 0..p {
            theta[(j, k)] = if k == j { 1.0 / tau } else { -gamma[k] / tau };
        }
        gammas.push(linalg::without_entry(&gamma, j));
    }
    Ok(PrecisionEstimate { theta_hat: theta, tau_sq, gammas, lambdas: lambdas.to_vec(), converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_covariance, sample_design, CovarianceSpec, DesignScale};
    use crate::estimators::lasso::{fit_lasso, LassoOptions};
    use crate::model::{Dataset, GlmFamily};
    use crate::rng::substream;

    /// Independent OLS residual sum of squares via Householder QR of X_-j.
    fn qr_rss(x: &DMatrix<f64>, j: usize) -> f64 {
        let col = x.column(j).into_owned();
        if x.ncols() == 1 {
            return col.norm_squared();
        }
        let rest = linalg::without_column(x, j);
        let qr = rest.clone().qr();
        let coef = qr.r().solve_upper_triangular(&qr.q().tr_mul(&col)).unwrap();
        (&col - rest * coef).norm_squared()
    }

    #[test]
    fn orthogonal_columns_keep_full_norm() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let tau = node_wise_ols_tau(&x, 3.0).unwrap();
        assert!((tau[0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((tau[1] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn single_feature_uses_empty_regression() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
        let tau = node_wise_ols_tau(&x, 1.0).unwrap();
        assert_eq!(tau[0], 9.0);
    }

    #[test]
    fn matches_qr_oracle() {
        let sigma = make_covariance(&CovarianceSpec::Toeplitz { r: 0.5 }, 3).unwrap();
        let x = sample_design(50, &sigma, DesignScale::Unit, &mut substream(4, 0)).unwrap();
        let tau = node_wise_ols_tau(&x, 48.0).unwrap();
        for j in 0..3 {
            assert!((tau[j] - qr_rss(&x, j) / 48.0).abs() < 1e-10);
        }
    }

    #[test]
    fn ols_tau_errors() {
        let x = DMatrix::from_fn(10, 3, |i, j| if j == 2 { i as f64 * 2.0 } else { (i * (j + 1)) as f64 });
        assert!(matches!(node_wise_ols_tau(&x, 1.0), Err(FdrError::RankDeficient { .. })));
        let ok = DMatrix::identity(3, 3);
        assert!(node_wise_ols_tau(&ok, 0.0).is_err());
    }

    #[test]
    fn orthogonal_weighted_design_gives_diagonal_theta() {
        let n = 40;
        let raw = sample_design(n, &DMatrix::identity(4, 4), DesignScale::Unit, &mut substream(1, 0)).unwrap();
        let mut x = raw.qr().q();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= (j + 1) as f64;
        }
        let est = node_wise_precision(&x, &[0.01; 4], None, &NodewiseOptions::default()).unwrap();
        for j in 0..4 {
            assert!(est.gammas[j].amax() < 1e-12);
            let expect = n as f64 / x.column(j).norm_squared();
            assert!((est.theta_hat[(j, j)] - expect).abs() < 1e-8 * expect);
        }
    }

    #[test]
    fn tiny_penalty_approaches_inverse_gram() {
        let sigma = make_covariance(&CovarianceSpec::Toeplitz { r: 0.6 }, 8).unwrap();
        let x = sample_design(100, &sigma, DesignScale::Unit, &mut substream(2, 0)).unwrap();
        let est = node_wise_precision(&x, &[1e-10; 8], None, &NodewiseOptions::default()).unwrap();
        let inv = linalg::spd_inverse(&linalg::sample_gram(&x), "gram").unwrap();
        assert!((&est.theta_hat - inv).amax() <= 1e-4);
        assert!(est.converged);
    }

    #[test]
    fn two_by_two_gamma_shrinks_toward_correlation() {
        // XᵀX/n = [[1, ρ], [ρ, 1]] exactly; the Lasso solution is S(ρ, λ).
        let n = 4;
        let rho: f64 = 0.6;
        let a = (1.0 + rho).sqrt();
        let b = (1.0 - rho).sqrt();
        let x = DMatrix::from_row_slice(n, 2, &[a, a, b, -b, -a, -a, -b, b]);
        let g = linalg::sample_gram(&x);
        assert!((g[(0, 1)] - rho).abs() < 1e-14);
        for &lam in &[0.3, 0.1, 0.01, 1e-6] {
            let est = node_wise_precision(&x, &[lam, lam], None, &NodewiseOptions::default()).unwrap();
            assert!((est.gammas[0][0] - soft_threshold(rho, lam)).abs() < 1e-9);
        }
    }

    #[test]
    fn reconstruction_is_exact() {
        let sigma = make_covariance(&CovarianceSpec::BlockwiseToeplitz { r: 0.5, blocks: 2 }, 12).unwrap();
        let x = sample_design(30, &sigma, DesignScale::Unit, &mut substream(6, 0)).unwrap();
        let est = node_wise_precision(&x, &[0.1; 12], None, &NodewiseOptions::default()).unwrap();
        assert_eq!(est.reconstruct(), est.theta_hat);
        assert!(est.tau_sq.iter().all(|t| *t > 0.0));
    }

    #[test]
    fn gram_lasso_agrees_with_residual_coordinate_descent() {
        let sigma = make_covariance(&CovarianceSpec::Toeplitz { r: 0.5 }, 15).unwrap();
        let x = sample_design(25, &sigma, DesignScale::Unit, &mut substream(8, 0)).unwrap();
        let est = node_wise_precision(&x, &[0.15; 15], None, &NodewiseOptions::default()).unwrap();
        for j in [0, 7, 14] {
            let data = Dataset::new(
                linalg::without_column(&x, j),
                x.column(j).into_owned(),
                GlmFamily::Gaussian,
            )
            .unwrap();
            let fit = fit_lasso(&data, 0.15, &LassoOptions::default()).unwrap();
            assert!((&fit.beta_hat - &est.gammas[j]).amax() < 1e-6);
        }
    }

    #[test]
    fn cross_variant_changes_only_tau() {
        let sigma = make_covariance(&CovarianceSpec::Toeplitz { r: 0.3 }, 6).unwrap();
        let x = sample_design(40, &sigma, DesignScale::Unit, &mut substream(10, 0)).unwrap();
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= 0.5 + (i % 3) as f64 * 0.1;
        }
        let a = node_wise_precision(&xw, &[0.05; 6], None, &NodewiseOptions::default()).unwrap();
        let b = node_wise_precision(&xw, &[0.05; 6], Some(&x), &NodewiseOptions::default()).unwrap();
        assert_eq!(a.gammas, b.gammas);
        assert!((&a.tau_sq - &b.tau_sq).amax() > 1e-6);
    }
}
