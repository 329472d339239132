//! Data-splitting selectors for `p ≥ n`, built on debiased Lasso estimates.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::{random_split, SplitPair};
use super::stats::{mirror_statistics, select};
use crate::error::{FdrError, Result};
use crate::estimators::debias::{debias_glm, debias_linear, weighted_design};
use crate::estimators::lambda::{select_lambda, LambdaRule};
use crate::estimators::lasso::{fit_lasso, LassoOptions};
use crate::estimators::nodewise::{node_wise_precision, NodewiseOptions};
use crate::linalg;
use crate::model::{check_q, Dataset, GlmFamily, MirrorConfig, MirrorResult};
use crate::par;
use crate::rng::substream;

/// Penalty rules for the main Lasso and the node-wise regressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaRules {
    pub main: LambdaRule,
    pub node: LambdaRule,
    /// Cross the weighted node-wise residual with the weighted column when
    /// forming `τ̂²` (default); `false` uses the unweighted column.
    pub weighted_cross: bool,
}

impl Default for LambdaRules {
    fn default() -> Self {
        LambdaRules { main: LambdaRule::Cv { folds: 10 }, node: LambdaRule::Theory { c: 1.0 }, weighted_cross: true }
    }
}

/// Per-node penalties for the node-wise regressions on `xw`.
pub fn node_lambdas<R: Rng + ?Sized>(xw: &nalgebra::DMatrix<f64>, rule: &LambdaRule, rng: &mut R) -> Result<Vec<f64>> {
    let p = xw.ncols();
    match *rule {
        LambdaRule::Cv { .. } => {
            let seed = rng.next_u64();
            par::map_indexed(p, |j| {
                let node = Dataset {
                    x: linalg::without_column(xw, j),
                    y: xw.column(j).into_owned(),
                    family: GlmFamily::Gaussian,
                };
                select_lambda(&node, rule, &mut substream(seed, j as u64))
            })
            .into_iter()
            .collect()
        }
        _ => {
            let lam = select_lambda(&Dataset { x: xw.clone(), y: DVector::zeros(xw.nrows()), family: GlmFamily::Gaussian }, rule, rng)?;
            Ok(vec![lam; p])
        }
    }
}

/// Normalized debiased estimates `β̂ᵈ_j / σ̂_j` on one half.
fn half_statistics<R: Rng + ?Sized>(part: &Dataset, rules: &LambdaRules, rng: &mut R) -> Result<(Vec<f64>, Vec<String>)> {
    let mut warnings = Vec::new();
    let lambda = select_lambda(part, &rules.main, rng)?;
    let lasso = fit_lasso(part, lambda, &LassoOptions::default())?;
    if !lasso.converged {
        warnings.push(format!("Lasso stopped with KKT residual {:.2e}", lasso.kkt_violation));
    }
    let fit = if part.family.is_gaussian() {
        let lams = node_lambdas(&part.x, &rules.node, rng)?;
        let prec = node_wise_precision(&part.x, &lams, None, &NodewiseOptions::default())?;
        if !prec.converged {
            warnings.push("a node-wise Lasso stopped before its KKT tolerance".to_string());
        }
        debias_linear(&part.x, &part.y, &lasso, &prec)?
    } else {
        let xw = weighted_design(part, &lasso.beta_hat);
        let lams = node_lambdas(&xw, &rules.node, rng)?;
        let cross = (!rules.weighted_cross).then_some(&part.x);
        let prec = node_wise_precision(&xw, &lams, cross, &NodewiseOptions::default())?;
        if !prec.converged {
            warnings.push("a node-wise Lasso stopped before its KKT tolerance".to_string());
        }
        debias_glm(part, &lasso, &prec)?
    };
    Ok((fit.normalized().iter().copied().collect(), warnings))
}

fn run_split(split: &SplitPair, cfg: &MirrorConfig, rules: &LambdaRules, seeds: [u64; 2]) -> Result<MirrorResult> {
    let parts = [&split.part1, &split.part2];
    let halves = par::map_indexed(2, |k| half_statistics(parts[k], rules, &mut substream(seeds[k], 0)));
    let mut it = halves.into_iter();
    let (t1, w1) = it.next().unwrap()?;
    let (t2, w2) = it.next().unwrap()?;
    let m = mirror_statistics(&t1, &t2, cfg.f_choice)?;
    let mut result = select(m, cfg.q)?;
    result.t_pair = Some((t1, t2));
    result.warnings.extend(w1.into_iter().map(|w| format!("half 1: {w}")));
    result.warnings.extend(w2.into_iter().map(|w| format!("half 2: {w}")));
    Ok(result)
}

pub fn ds_high_linear(data: &Dataset, cfg: &MirrorConfig, rules: &LambdaRules) -> Result<MirrorResult> {
    ds_high_linear_with(data, cfg, rules, &mut substream(cfg.seed, 0))
}

pub fn ds_high_linear_with<R: Rng + ?Sized>(
    data: &Dataset,
    cfg: &MirrorConfig,
    rules: &LambdaRules,
    rng: &mut R,
) -> Result<MirrorResult> {
    if !data.family.is_gaussian() {
        return Err(FdrError::InvalidInput(format!(
            "the linear selector needs the gaussian family, got {}",
            data.family.name()
        )));
    }
    ds_high_glm_with(data, cfg, rules, rng)
}

pub fn ds_high_glm(data: &Dataset, cfg: &MirrorConfig, rules: &LambdaRules) -> Result<MirrorResult> {
    ds_high_glm_with(data, cfg, rules, &mut substream(cfg.seed, 0))
}

pub fn ds_high_glm_with<R: Rng + ?Sized>(
    data: &Dataset,
    cfg: &MirrorConfig,
    rules: &LambdaRules,
    rng: &mut R,
) -> Result<MirrorResult> {
    check_q(cfg.q)?;
    if data.n() < 4 {
        return Err(FdrError::InsufficientSamples { half: data.n() / 2, p: 1 });
    }
    let split = random_split(data, rng);
    let seeds = [rng.next_u64(), rng.next_u64()];
    run_split(&split, cfg, rules, seeds)
}
