//! Benjamini–Hochberg comparators on Wald-type p-values.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{FdrError, Result};
use crate::estimators::debias::{debias_glm, weighted_design, DebiasedFit};
use crate::estimators::lambda::select_lambda;
use crate::estimators::lasso::{fit_lasso, LassoOptions};
use crate::estimators::mle::MleFit;
use crate::estimators::nodewise::{node_wise_precision, NodewiseOptions};
use crate::linalg;
use crate::mirror::{node_lambdas, LambdaRules};
use crate::model::{check_q, Dataset, WEIGHT_FLOOR};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvalueMethod {
    WaldMle,
    Debiased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvalueReport {
    pub pvals: Vec<f64>,
    pub zscores: Vec<f64>,
    pub method: PvalueMethod,
}

/// Two-sided normal p-value `2(1 − Φ(|z|)) = erfc(|z|/√2)`.
pub fn two_sided_pvalue(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

fn report(zscores: Vec<f64>, method: PvalueMethod) -> PvalueReport {
    let pvals = zscores.iter().map(|&z| two_sided_pvalue(z)).collect();
    PvalueReport { pvals, zscores, method }
}

/// `z_j = β̂_j / se_j` with `se²` the diagonal of the inverse Fisher
/// information `(XᵀWX)⁻¹` at the MLE.
pub fn wald_pvalues_mle(data: &Dataset, fit: &MleFit) -> Result<PvalueReport> {
    if !fit.converged {
        return Err(FdrError::InvalidInput("Wald p-values need a converged MLE".into()));
    }
    let x = match fit.intercept {
        Some(_) => data.x.clone().insert_column(0, 1.0),
        None => data.x.clone(),
    };
    let beta = match fit.intercept {
        Some(b0) => fit.beta_hat.clone().insert_row(0, b0),
        None => fit.beta_hat.clone(),
    };
    if beta.len() != x.ncols() {
        return Err(FdrError::InvalidInput("fit does not match the design".into()));
    }
    let eta = &x * &beta;
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= data.family.eval(data.y[i], eta[i]).ddot.max(WEIGHT_FLOOR).sqrt();
    }
    let info = xw.tr_mul(&xw);
    let cov = linalg::spd_inverse(&info, "Fisher information").map_err(|_| FdrError::SingularHessian)?;
    let offset = usize::from(fit.intercept.is_some());
    let z = (0..data.p())
        .map(|j| fit.beta_hat[j] / cov[(j + offset, j + offset)].sqrt())
        .collect();
    Ok(report(z, PvalueMethod::WaldMle))
}

/// `z_j = √n β̂ᵈ_j / σ̂_j`.
pub fn wald_pvalues_debiased(fit: &DebiasedFit, n: usize) -> PvalueReport {
    let rn = (n as f64).sqrt();
    let z: DVector<f64> = fit.beta_d.component_div(&fit.sigma_hat) * rn;
    report(z.iter().copied().collect(), PvalueMethod::Debiased)
}

/// Debiased Lasso on the full data followed by [`wald_pvalues_debiased`].
/// Penalties are drawn from substream 0 of `seed`.
pub fn debiased_lasso_pvalues(data: &Dataset, rules: &LambdaRules, seed: u64) -> Result<PvalueReport> {
    let mut rng = substream(seed, 0);
    let lambda = select_lambda(data, &rules.main, &mut rng)?;
    let lasso = fit_lasso(data, lambda, &LassoOptions::default())?;
    let xw = weighted_design(data, &lasso.beta_hat);
    let lams = node_lambdas(&xw, &rules.node, &mut rng)?;
    let cross = (!rules.weighted_cross && !data.family.is_gaussian()).then_some(&data.x);
    let prec = node_wise_precision(&xw, &lams, cross, &NodewiseOptions::default())?;
    let fit = debias_glm(data, &lasso, &prec)?;
    Ok(wald_pvalues_debiased(&fit, data.n()))
}

/// Step-up rule: rejects the `k*` smallest p-values with
/// `k* = max{k : p_(k) ≤ kq/p}`. Returns ascending indices.
pub fn benjamini_hochberg(pvals: &[f64], q: f64) -> Result<Vec<usize>> {
    check_q(q)?;
    if let Some(bad) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(FdrError::InvalidInput(format!("p-value {bad} outside [0,1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let kstar = (1..=m).rev().find(|&k| pvals[order[k - 1]] <= k as f64 * q / m as f64);
    let Some(k) = kstar else { return Ok(Vec::new()) };
    let cut = pvals[order[k - 1]];
    Ok((0..m).filter(|&j| pvals[j] <= cut).collect())
}
