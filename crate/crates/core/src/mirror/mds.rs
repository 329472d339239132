//! Multiple data splitting: aggregate many single-split selections through
//! inclusion rates.

use serde::{Deserialize, Serialize};

use super::high::{ds_high_glm_with, ds_high_linear_with, LambdaRules};
use super::moderate::{ds_moderate_with, ModerateOptions};
use crate::error::{FdrError, Result};
use crate::estimators::lambda::{select_lambda, LambdaRule};
use crate::model::{check_q, Dataset, MirrorConfig, MirrorResult};
use crate::par;
use crate::rng::substream;

pub const DEFAULT_SPLITS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSelector {
    DsModerate,
    DsHighLinear,
    DsHighGlm,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MdsOptions {
    pub moderate: ModerateOptions,
    pub rules: LambdaRules,
    /// Pick the main Lasso penalty once on the full data instead of on
    /// every half.
    pub freeze_lambda: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionRates {
    pub rates: Vec<f64>,
    /// Number of splits that completed.
    pub m: usize,
    pub per_split: Vec<Vec<usize>>,
}

/// `Î_j = (1/m) Σ_k 1(j ∈ S_k) / max(|S_k|, 1)`.
pub fn inclusion_rates(per_split: Vec<Vec<usize>>, p: usize) -> Result<InclusionRates> {
    let m = per_split.len();
    if m == 0 {
        return Err(FdrError::InvalidInput("no completed splits to aggregate".into()));
    }
    let mut rates = vec![0.0; p];
    for s in &per_split {
        let size = s.len().max(1) as f64;
        for &j in s {
            if j >= p {
                return Err(FdrError::InvalidInput(format!("selected index {j} out of range for p = {p}")));
            }
            rates[j] += 1.0 / size;
        }
    }
    for r in rates.iter_mut() {
        *r /= m as f64;
    }
    Ok(InclusionRates { rates, m, per_split })
}

/// Selection from inclusion rates.
///
/// Sorting the rates ascending, `ℓ` is the largest count whose smallest
/// rates sum to at most `q`, and the features with rate above the `ℓ`-th
/// smallest are selected. When even the smallest rate exceeds `q`, `ℓ = 0`
/// and the threshold is 0. Returns the selected set, the threshold and the
/// sum of the `ℓ` smallest rates.
pub fn mds_select(rates: &[f64], q: f64) -> (Vec<usize>, f64, f64) {
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cum = 0.0;
    let mut ell = 0;
    let mut reached = 0.0;
    for (k, &r) in sorted.iter().enumerate() {
        cum += r;
        if cum <= q {
            ell = k + 1;
            reached = cum;
        }
    }
    let threshold = if ell == 0 { 0.0 } else { sorted[ell - 1] };
    let selected = (0..rates.len()).filter(|&j| rates[j] > threshold).collect();
    (selected, threshold, reached)
}

/// Runs `base` over `m` independent splits. Split `k` draws from substream
/// `k` of the configured seed, so split 0 reproduces the single-split run.
/// Failed splits are dropped and reported in the warnings.
pub fn mds(
    data: &Dataset,
    base: BaseSelector,
    m: usize,
    cfg: &MirrorConfig,
    opts: &MdsOptions,
) -> Result<(MirrorResult, InclusionRates)> {
    check_q(cfg.q)?;
    if m == 0 {
        return Err(FdrError::InvalidInput("number of splits must be at least 1".into()));
    }
    let mut rules = opts.rules;
    if opts.freeze_lambda && base != BaseSelector::DsModerate {
        let lambda = select_lambda(data, &rules.main, &mut substream(cfg.seed, u64::MAX))?;
        rules.main = LambdaRule::Fixed { value: lambda };
    }

    let runs = par::map_indexed(m, |k| {
        let mut rng = substream(cfg.seed, k as u64);
        match base {
            BaseSelector::DsModerate => ds_moderate_with(data, cfg, &opts.moderate, &mut rng),
            BaseSelector::DsHighLinear => ds_high_linear_with(data, cfg, &rules, &mut rng),
            BaseSelector::DsHighGlm => ds_high_glm_with(data, cfg, &rules, &mut rng),
        }
    });

    let mut per_split = Vec::with_capacity(m);
    let mut warnings = Vec::new();
    let mut last_err = None;
    for (k, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => per_split.push(r.selected),
            Err(e) => {
                warnings.push(format!("split {}: dropped ({e})", k + 1));
                last_err = Some(e);
            }
        }
    }
    if per_split.is_empty() {
        return Err(last_err.expect("m >= 1"));
    }
    let rates = inclusion_rates(per_split, data.p())?;
    let (selected, threshold, reached) = mds_select(&rates.rates, cfg.q);
    let result = MirrorResult {
        mirror: rates.rates.clone(),
        cutoff: Some(threshold),
        selected,
        fdp_hat: Some(reached),
        t_pair: None,
        warnings,
    };
    Ok((result, rates))
}
