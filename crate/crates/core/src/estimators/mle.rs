//! Maximum likelihood for GLMs by damped Newton (IRLS) iterations.

use nalgebra::{DMatrix, DVector};

use crate::error::{FdrError, Result};
use crate::linalg;
use crate::model::{Dataset, WEIGHT_FLOOR};

/// Iterates whose Euclidean norm exceeds this are treated as diverging.
pub const DIVERGENCE_BOUND: f64 = 1e6;
const MAX_HALVINGS: usize = 30;
const RIDGE_CONDITION: f64 = 1e12;
const RIDGE: f64 = 1e-8;
/// Relative Newton-step size accepted as converged.
const STEP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iter: usize,
    /// Sup-norm tolerance on the mean-loss gradient.
    pub tol: f64,
    /// Prepend an all-ones column. Off by default.
    pub intercept: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { max_iter: 100, tol: 1e-8, intercept: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    /// Coefficients of the design columns (intercept excluded).
    pub beta_hat: DVector<f64>,
    pub intercept: Option<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Mean loss after each accepted step, starting from the initial point.
    pub loss_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

struct Local {
    loss: f64,
    grad: DVector<f64>,
    weights: DVector<f64>,
}

fn local(x: &DMatrix<f64>, data: &Dataset, beta: &DVector<f64>, need_weights: bool) -> Local {
    let n = x.nrows() as f64;
    let eta = x * beta;
    let mut loss = 0.0;
    let mut dots = DVector::zeros(x.nrows());
    let mut weights = DVector::zeros(if need_weights { x.nrows() } else { 0 });
    for i in 0..x.nrows() {
        let e = data.family.eval(data.y[i], eta[i]);
        loss += e.loss;
        dots[i] = e.dot;
        if need_weights {
            weights[i] = e.ddot.max(WEIGHT_FLOOR);
        }
    }
    Local { loss: loss / n, grad: x.tr_mul(&dots) / n, weights }
}

fn mean_loss(x: &DMatrix<f64>, data: &Dataset, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(data.y.iter())
        .map(|(&v, &y)| data.family.eval(y, v).loss)
        .sum::<f64>()
        / x.nrows() as f64
}

/// `XᵀWX / n` for row weights `w`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i].sqrt();
    }
    xw.tr_mul(&xw) / x.nrows() as f64
}

pub fn fit_mle(data: &Dataset, opts: &MleOptions) -> Result<MleFit> {
    let x = if opts.intercept {
        data.x.clone().insert_column(0, 1.0)
    } else {
        data.x.clone()
    };
    let (n, k) = x.shape();
    if n <= k {
        return Err(FdrError::InsufficientSamples { half: n, p: k });
    }
    // Rank check on the unweighted design; weights only rescale rows.
    let gram = linalg::sample_gram(&x);
    match linalg::cholesky(&gram, "design Gram") {
        Ok(c) if linalg::cholesky_condition(&c) < 1e14 => {}
        _ => return Err(FdrError::SingularHessian),
    }

    let mut beta = DVector::zeros(k);
    let mut warnings = Vec::new();
    let mut state = local(&x, data, &beta, true);
    let mut trace = vec![state.loss];
    let mut converged = false;
    let mut iterations = 0;
    let mut warned_ridge = false;

    loop {
        let mut hess = weighted_gram(&x, &state.weights);
        let chol = match linalg::cholesky(&hess, "weighted Gram") {
            Ok(c) if linalg::cholesky_condition(&c) <= RIDGE_CONDITION => c,
            _ => {
                if !warned_ridge {
                    warnings.push(format!(
                        "weighted Gram ill-conditioned at iteration {iterations}; added {RIDGE:e} ridge"
                    ));
                    warned_ridge = true;
                }
                for d in 0..k {
                    hess[(d, d)] += RIDGE;
                }
                linalg::cholesky(&hess, "ridged weighted Gram").map_err(|_| FdrError::SingularHessian)?
            }
        };
        let step = chol.solve(&(-&state.grad));
        // A vanishing gradient alone is not enough: under separation the loss
        // tends to zero along a ray and the gradient decays with it, while the
        // Newton step stays of order one.
        if linalg::sup_norm(&state.grad) <= opts.tol && step.amax() <= STEP_TOL * beta.amax().max(1.0) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut t = 1.0;
        let mut accepted = None;
        let slack = 4.0 * f64::EPSILON * state.loss.abs().max(1.0);
        for _ in 0..=MAX_HALVINGS {
            let candidate = &beta + &step * t;
            let l = mean_loss(&x, data, &candidate);
            if l.is_finite() && l <= state.loss + slack {
                accepted = Some(candidate);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(FdrError::MleNonexistent { iterations, norm: beta.norm() });
        };
        beta = next;
        if beta.norm() > DIVERGENCE_BOUND {
            return Err(FdrError::MleNonexistent { iterations, norm: beta.norm() });
        }
        state = local(&x, data, &beta, true);
        trace.push(state.loss);
    }
    if !converged {
        return Err(FdrError::MleNonexistent { iterations, norm: beta.norm() });
    }
    // Observations whose curvature fell to the floor carry no information:
    // the fit has run off to infinity along a separating direction.
    if !data.family.is_gaussian() && state.weights.iter().any(|&w| w <= WEIGHT_FLOOR) {
        return Err(FdrError::MleNonexistent { iterations, norm: beta.norm() });
    }

    let grad_norm = linalg::sup_norm(&state.grad);
    let (intercept, beta_hat) = if opts.intercept {
        (Some(beta[0]), beta.rows(1, k - 1).into_owned())
    } else {
        (None, beta)
    };
    Ok(MleFit { beta_hat, intercept, iterations, grad_norm, converged, loss_trace: trace, warnings })
}
