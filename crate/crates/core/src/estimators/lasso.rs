//! L1-penalized estimation.
//!
//! Gaussian responses use the least-squares objective
//! `(1/2n)‖y − Xβ‖² + λ‖β‖₁`, solved by cyclic coordinate descent with
//! active-set cycling. Other families use `(1/2n) Σ loss(y_i, x_iᵀβ) + λ‖β‖₁`
//! and a proximal-Newton outer loop whose quadratic subproblems are weighted
//! Lasso problems solved by the same coordinate descent.

use nalgebra::{DMatrix, DVector};

use crate::error::{FdrError, Result};
use crate::linalg::soft_threshold;
use crate::model::{Dataset, WEIGHT_FLOOR};

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Coordinate-descent convergence: largest coefficient change in a sweep.
    pub tol: f64,
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    /// Proximal-Newton iterations for non-Gaussian families.
    pub max_outer: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { tol: 1e-9, kkt_tol: 1e-6, max_sweeps: 100_000, max_outer: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta_hat: DVector<f64>,
    pub lambda: f64,
    pub kkt_violation: f64,
    pub active_set: Vec<usize>,
    pub converged: bool,
    /// Coordinate sweeps (Gaussian) or proximal-Newton steps (GLM).
    pub iterations: usize,
}

/// Weighted least-squares Lasso subproblem
/// `(scale/n) · ½ Σ w_i (z_i − x_iᵀβ)² + λ‖β‖₁`, with the residual
/// `z − Xβ` maintained in `resid`.
struct CdProblem<'a> {
    x: &'a DMatrix<f64>,
    w: Option<&'a DVector<f64>>,
    scale: f64,
    lambda: f64,
    curvature: Vec<f64>,
}

impl<'a> CdProblem<'a> {
    fn new(x: &'a DMatrix<f64>, w: Option<&'a DVector<f64>>, scale: f64, lambda: f64) -> Self {
        let c = scale / x.nrows() as f64;
        let curvature = x
            .column_iter()
            .map(|col| match w {
                Some(w) => c * col.iter().zip(w.iter()).map(|(a, b)| a * a * b).sum::<f64>(),
                None => c * col.norm_squared(),
            })
            .collect();
        CdProblem { x, w, scale, lambda, curvature }
    }

    fn update(&self, k: usize, beta: &mut DVector<f64>, resid: &mut DVector<f64>) -> f64 {
        let a = self.curvature[k];
        if a <= 0.0 {
            let old = beta[k];
            beta[k] = 0.0;
            return old.abs();
        }
        let col = self.x.column(k);
        let c = self.scale / self.x.nrows() as f64;
        let corr = match self.w {
            Some(w) => col.iter().zip(resid.iter()).zip(w.iter()).map(|((x, r), w)| x * r * w).sum::<f64>(),
            None => col.dot(resid),
        };
        let old = beta[k];
        let new = soft_threshold(c * corr + a * old, self.lambda) / a;
        let delta = new - old;
        if delta != 0.0 {
            beta[k] = new;
            resid.axpy(-delta, &col, 1.0);
        }
        delta.abs()
    }

    fn sweep(&self, coords: &[usize], beta: &mut DVector<f64>, resid: &mut DVector<f64>) -> f64 {
        coords.iter().fold(0.0f64, |m, &k| m.max(self.update(k, beta, resid)))
    }

    /// Runs active-set cycling until a full sweep moves no coefficient by
    /// more than `tol`. Returns the number of sweeps used.
    fn solve(&self, beta: &mut DVector<f64>, resid: &mut DVector<f64>, tol: f64, max_sweeps: usize) -> usize {
        let all: Vec<usize> = (0..self.x.ncols()).collect();
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            let change = self.sweep(&all, beta, resid);
            sweeps += 1;
            if change <= tol {
                break;
            }
            let active: Vec<usize> = (0..beta.len()).filter(|&k| beta[k] != 0.0).collect();
            while sweeps < max_sweeps {
                let change = self.sweep(&active, beta, resid);
                sweeps += 1;
                if change <= tol {
                    break;
                }
            }
        }
        sweeps
    }
}

fn kkt_from_grad(grad: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    grad.iter()
        .zip(beta.iter())
        .map(|(&g, &b)| {
            if b > 0.0 {
                (g + lambda).abs()
            } else if b < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Gradient of the smooth part of the objective solved for `data.family`.
pub fn smooth_gradient(data: &Dataset, beta: &DVector<f64>) -> DVector<f64> {
    let n = data.n() as f64;
    let eta = &data.x * beta;
    if data.family.is_gaussian() {
        let r = &data.y - eta;
        -data.x.tr_mul(&r) / n
    } else {
        let dots = DVector::from_iterator(
            data.n(),
            data.y.iter().zip(eta.iter()).map(|(&y, &v)| data.family.eval(y, v).dot),
        );
        data.x.tr_mul(&dots) / (2.0 * n)
    }
}

/// Largest subgradient-optimality violation of `beta` at penalty `lambda`.
pub fn lasso_kkt(data: &Dataset, beta: &DVector<f64>, lambda: f64) -> f64 {
    kkt_from_grad(&smooth_gradient(data, beta), beta, lambda)
}

pub fn lasso_objective(data: &Dataset, beta: &DVector<f64>, lambda: f64) -> f64 {
    let n = data.n() as f64;
    let eta = &data.x * beta;
    let smooth = if data.family.is_gaussian() {
        (&data.y - eta).norm_squared() / (2.0 * n)
    } else {
        data.y.iter().zip(eta.iter()).map(|(&y, &v)| data.family.eval(y, v).loss).sum::<f64>() / (2.0 * n)
    };
    smooth + lambda * beta.lp_norm(1)
}

/// Smallest penalty at which the zero vector is optimal.
pub fn lambda_max(data: &Dataset) -> f64 {
    smooth_gradient(data, &DVector::zeros(data.p())).amax()
}

pub fn fit_lasso(data: &Dataset, lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
    fit_lasso_from(data, lambda, None, opts)
}

/// Like [`fit_lasso`], warm-started at `init`.
pub fn fit_lasso_from(
    data: &Dataset,
    lambda: f64,
    init: Option<&DVector<f64>>,
    opts: &LassoOptions,
) -> Result<LassoFit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(FdrError::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let mut beta = match init {
        Some(b) if b.len() == data.p() => b.clone(),
        Some(b) => {
            return Err(FdrError::InvalidInput(format!(
                "warm start has length {} but p = {}",
                b.len(),
                data.p()
            )))
        }
        None => DVector::zeros(data.p()),
    };
    let (iterations, converged) = if data.family.is_gaussian() {
        gaussian_cd(data, lambda, &mut beta, opts)
    } else {
        prox_newton(data, lambda, &mut beta, opts)
    };
    let kkt_violation = lasso_kkt(data, &beta, lambda);
    let active_set = (0..beta.len()).filter(|&k| beta[k] != 0.0).collect();
    Ok(LassoFit {
        beta_hat: beta,
        lambda,
        kkt_violation,
        active_set,
        converged: converged && kkt_violation <= opts.kkt_tol,
        iterations,
    })
}

fn gaussian_cd(data: &Dataset, lambda: f64, beta: &mut DVector<f64>, opts: &LassoOptions) -> (usize, bool) {
    let problem = CdProblem::new(&data.x, None, 1.0, lambda);
    let mut resid = &data.y - &data.x * &*beta;
    let mut tol = opts.tol;
    let mut sweeps = 0;
    loop {
        sweeps += problem.solve(beta, &mut resid, tol, opts.max_sweeps - sweeps);
        // Recompute the residual so accumulated rounding does not leak into
        // the KKT check.
        resid = &data.y - &data.x * &*beta;
        let g = -data.x.tr_mul(&resid) / data.n() as f64;
        if kkt_from_grad(&g, beta, lambda) <= opts.kkt_tol {
            return (sweeps, true);
        }
        if sweeps >= opts.max_sweeps || tol < 1e-15 {
            return (sweeps, false);
        }
        tol *= 0.1;
    }
}

fn prox_newton(data: &Dataset, lambda: f64, beta: &mut DVector<f64>, opts: &LassoOptions) -> (usize, bool) {
    let n = data.n();
    let two_n = 2.0 * n as f64;
    let family = data.family;
    let mut outer = 0;
    let mut eta = &data.x * &*beta;
    let mut objective = lasso_objective(data, beta, lambda);
    let mut sweeps_left = opts.max_sweeps;
    while outer < opts.max_outer {
        let mut dots = DVector::zeros(n);
        let mut weights = DVector::zeros(n);
        for i in 0..n {
            let e = family.eval(data.y[i], eta[i]);
            dots[i] = e.dot;
            weights[i] = e.ddot.max(WEIGHT_FLOOR);
        }
        let grad = data.x.tr_mul(&dots) / two_n;
        let kkt = kkt_from_grad(&grad, beta, lambda);
        if kkt <= opts.kkt_tol {
            return (outer, true);
        }
        outer += 1;

        // Quadratic model: (1/2n) Σ [dot_i d_i + ½ w_i d_i²]
        //   = (1/2n) · ½ Σ w_i (z_i − x_iᵀβ)² + const, z = η − dot/w.
        let problem = CdProblem::new(&data.x, Some(&weights), 0.5, lambda);
        let mut candidate = beta.clone();
        let mut resid = DVector::from_iterator(n, (0..n).map(|i| -dots[i] / weights[i]));
        let inner_tol = (0.01 * kkt).clamp(1e-13, opts.tol.max(1e-13));
        let used = problem.solve(&mut candidate, &mut resid, inner_tol, sweeps_left.max(1));
        sweeps_left = sweeps_left.saturating_sub(used);
        let direction = &candidate - &*beta;
        if direction.amax() == 0.0 {
            return (outer, false);
        }
        let descent = grad.dot(&direction) + lambda * (candidate.lp_norm(1) - beta.lp_norm(1));
        let slack = 4.0 * f64::EPSILON * objective.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &*beta + &direction * t;
            let f = lasso_objective(data, &trial, lambda);
            if f.is_finite() && f <= objective + 1e-4 * t * descent.min(0.0) + slack {
                *beta = trial;
                objective = f;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return (outer, false);
        }
        eta = &data.x * &*beta;
    }
    let ok = lasso_kkt(data, beta, lambda) <= opts.kkt_tol;
    (outer, ok)
}
