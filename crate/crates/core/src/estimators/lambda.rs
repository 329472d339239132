//! Penalty-level selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lasso::{fit_lasso_from, lambda_max, LassoOptions};
use crate::error::{FdrError, Result};
use crate::model::{Dataset, GlmFamily};
use crate::par;

pub const CV_GRID_LEN: usize = 50;
pub const CV_GRID_RATIO: f64 = 1e-3;
const MAX_REFOLDS: usize = 10;
/// A fold's path stops once its training fit explains this share of the
/// null deviance; the remaining grid points count as unusable.
pub const CV_DEVIANCE_RATIO_STOP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    /// k-fold cross-validated held-out loss over a log grid.
    Cv { folds: usize },
    /// `c · sqrt(log p / n)`.
    Theory { c: f64 },
    Fixed { value: f64 },
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRule::Cv { folds } => write!(f, "cv:{folds}"),
            LambdaRule::Theory { c } => write!(f, "theory:{c}"),
            LambdaRule::Fixed { value } => write!(f, "fixed:{value}"),
        }
    }
}

impl FromStr for LambdaRule {
    type Err = String;

    /// Accepts `cv`, `cv:K`, `theory`, `theory:C` and `fixed:V`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: &str| a.parse::<f64>().map_err(|e| format!("bad number in lambda rule '{s}': {e}"));
        match (head, arg) {
            ("cv", None) => Ok(LambdaRule::Cv { folds: 10 }),
            ("cv", Some(k)) => k
                .parse::<usize>()
                .map(|folds| LambdaRule::Cv { folds })
                .map_err(|e| format!("bad fold count in '{s}': {e}")),
            ("theory", None) => Ok(LambdaRule::Theory { c: 1.0 }),
            ("theory", Some(c)) => Ok(LambdaRule::Theory { c: num(c)? }),
            ("fixed", Some(v)) => Ok(LambdaRule::Fixed { value: num(v)? }),
            _ => Err(format!("unknown lambda rule '{s}' (expected cv[:K], theory[:C] or fixed:V)")),
        }
    }
}

pub fn theory_lambda(c: f64, n: usize, p: usize) -> f64 {
    c * ((p as f64).ln() / n as f64).sqrt()
}

/// Log-spaced grid from `lambda_max` down to `lambda_max · 1e-3`.
pub fn lambda_grid(lmax: f64) -> Vec<f64> {
    let steps = (CV_GRID_LEN - 1) as f64;
    (0..CV_GRID_LEN)
        .map(|i| lmax * CV_GRID_RATIO.powf(i as f64 / steps))
        .collect()
}

pub fn select_lambda<R: Rng + ?Sized>(data: &Dataset, rule: &LambdaRule, rng: &mut R) -> Result<f64> {
    let lambda = match *rule {
        LambdaRule::Theory { c } => theory_lambda(c, data.n(), data.p().max(2)),
        LambdaRule::Fixed { value } => value,
        LambdaRule::Cv { folds } => cross_validate(data, folds, rng)?,
    };
    if lambda > 0.0 && lambda.is_finite() {
        Ok(lambda)
    } else {
        Err(FdrError::InvalidInput(format!("rule {rule} produced a non-positive lambda ({lambda})")))
    }
}

fn degenerate(data: &Dataset, rows: &[usize]) -> bool {
    if rows.is_empty() {
        return true;
    }
    match data.family {
        GlmFamily::Logistic => {
            let first = data.y[rows[0]];
            rows.iter().all(|&i| data.y[i] == first)
        }
        _ => false,
    }
}

fn assign_folds<R: Rng + ?Sized>(data: &Dataset, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    let n = data.n();
    for _ in 0..MAX_REFOLDS {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut folds = vec![Vec::new(); k];
        for (pos, &i) in order.iter().enumerate() {
            folds[pos % k].push(i);
        }
        let ok = folds.iter().all(|held| {
            let mut train: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
            train.sort_unstable();
            !degenerate(data, held) && !degenerate(data, &train)
        });
        if ok {
            for f in folds.iter_mut() {
                f.sort_unstable();
            }
            return Ok(folds);
        }
    }
    Err(FdrError::InvalidInput(format!(
        "could not form {k} non-degenerate folds after {MAX_REFOLDS} shuffles"
    )))
}

/// Returns the grid penalty minimizing the summed held-out loss. Each
/// fold walks the grid with warm starts and stops early when a fit fails to
/// converge or nearly saturates the training data.
fn cross_validate<R: Rng + ?Sized>(data: &Dataset, k: usize, rng: &mut R) -> Result<f64> {
    if k < 2 || k > data.n() {
        return Err(FdrError::InvalidInput(format!("cv needs 2 <= folds <= n, got {k}")));
    }
    let lmax = lambda_max(data);
    if !(lmax > 0.0) {
        return Err(FdrError::InvalidInput("lambda_max is zero; response is orthogonal to every feature".into()));
    }
    let grid = lambda_grid(lmax);
    let folds = assign_folds(data, k, rng)?;
    let opts = LassoOptions::default();

    let per_fold: Vec<Vec<f64>> = par::map_indexed(k, |f| {
        let held = &folds[f];
        let mut in_held = vec![false; data.n()];
        for &i in held {
            in_held[i] = true;
        }
        let train_rows: Vec<usize> = (0..data.n()).filter(|&i| !in_held[i]).collect();
        let train = data.rows(&train_rows);
        let test = data.rows(held);
        let mut losses = vec![f64::INFINITY; grid.len()];
        let mut warm = None;
        let saturated: f64 = train.y.iter().map(|&y| train.family.saturated_loss(y)).sum();
        let null_dev = train.y.iter().map(|&y| train.family.eval(y, 0.0).loss).sum::<f64>() - saturated;
        for (g, &lambda) in grid.iter().enumerate() {
            let Ok(fit) = fit_lasso_from(&train, lambda, warm.as_ref(), &opts) else { break };
            if !fit.converged {
                // Further down the path the problem only gets harder
                // (near-separation for binary responses).
                break;
            }
            let eta = &test.x * &fit.beta_hat;
            losses[g] = test
                .y
                .iter()
                .zip(eta.iter())
                .map(|(&y, &v)| test.family.eval(y, v).loss)
                .sum();
            let fitted = &train.x * &fit.beta_hat;
            let dev: f64 =
                train.y.iter().zip(fitted.iter()).map(|(&y, &v)| train.family.eval(y, v).loss).sum::<f64>() - saturated;
            if null_dev > 0.0 && 1.0 - dev / null_dev >= CV_DEVIANCE_RATIO_STOP {
                break;
            }
            warm = Some(fit.beta_hat);
        }
        losses
    });

    let mut best = (0usize, f64::INFINITY);
    for g in 0..grid.len() {
        let total: f64 = per_fold.iter().map(|l| l[g]).sum();
        if total < best.1 {
            best = (g, total);
        }
    }
    Ok(grid[best.0])
}
