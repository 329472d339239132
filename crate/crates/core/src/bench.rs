//! Monte Carlo harness: empirical FDR and power over scenario grids.

use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::baselines::{benjamini_hochberg, debiased_lasso_pvalues, wald_pvalues_mle};
use crate::datagen::{
    make_covariance, sample_coefficients, sample_response, CovarianceSpec, DesignSampler, DesignScale, SignalSpec,
};
use crate::error::{FdrError, Result};
use crate::estimators::mle::fit_mle;
use crate::estimators::nodewise::TauMethod;
use crate::mirror::{
    ds_high_glm, ds_moderate, gm_moderate, mds, BaseSelector, LambdaRules, MdsOptions, ModerateOptions,
};
use crate::model::{check_q, fdp_power, Dataset, FChoice, GlmFamily, MirrorConfig};
use crate::par;
use crate::rng::substream;

/// Share of skipped replications above which a cell is flagged unreliable.
pub const UNRELIABLE_SKIP_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Moderate,
    High,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Moderate => "moderate",
            Regime::High => "high",
        }
    }

    /// Feature scaling used when a scenario does not set one.
    pub fn default_scale(self) -> DesignScale {
        match self {
            Regime::Moderate => DesignScale::InvN,
            Regime::High => DesignScale::Unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ds,
    Mds { m: usize },
    Gm,
    BhqMle,
    BhqDebiased,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ds => write!(f, "DS"),
            Method::Mds { m } => write!(f, "MDS({m})"),
            Method::Gm => write!(f, "GM"),
            Method::BhqMle => write!(f, "BHq_mle"),
            Method::BhqDebiased => write!(f, "BHq_debiased"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub n: usize,
    pub p: usize,
    pub family: GlmFamily,
    pub covariance: CovarianceSpec,
    pub scale: DesignScale,
    pub signal: SignalSpec,
    pub q: f64,
    pub f_choice: FChoice,
    pub method: Method,
    pub reps: usize,
    pub seed: u64,
    pub regime: Regime,
    pub rules: LambdaRules,
    pub tau: TauMethod,
}

impl Scenario {
    /// A scenario with the regime's default scaling, product mirror and
    /// default penalty rules.
    pub fn new(
        regime: Regime,
        n: usize,
        p: usize,
        family: GlmFamily,
        covariance: CovarianceSpec,
        signal: SignalSpec,
        method: Method,
    ) -> Self {
        Scenario {
            label: String::new(),
            n,
            p,
            family,
            covariance,
            scale: regime.default_scale(),
            signal,
            q: 0.1,
            f_choice: FChoice::Product,
            method,
            reps: 20,
            seed: 0,
            regime,
            rules: LambdaRules::default(),
            tau: TauMethod::NodewiseOls,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_q(self.q)?;
        self.family.validate()?;
        if self.n == 0 || self.p == 0 || self.reps == 0 {
            return Err(FdrError::InvalidInput("n, p and reps must be positive".into()));
        }
        if self.signal.p1 > self.p {
            return Err(FdrError::InvalidInput(format!("p1 = {} exceeds p = {}", self.signal.p1, self.p)));
        }
        if let Method::Mds { m: 0 } = self.method {
            return Err(FdrError::InvalidInput("MDS needs at least one split".into()));
        }
        match (self.regime, self.method) {
            (Regime::Moderate, Method::BhqDebiased) => Err(FdrError::InvalidInput(
                "BHq on debiased Lasso p-values belongs to the high-dimensional regime".into(),
            )),
            (Regime::High, Method::Gm | Method::BhqMle) => Err(FdrError::InvalidInput(format!(
                "{} needs the moderate regime",
                self.method
            ))),
            (Regime::Moderate, _) if self.n <= self.p => {
                Err(FdrError::InvalidInput(format!("moderate regime needs n > p (n = {}, p = {})", self.n, self.p)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub fdp: f64,
    pub power: Option<f64>,
    pub selected: usize,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRep {
    pub rep: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub scenario: Scenario,
    pub per_rep: Vec<RepRecord>,
    pub skipped: Vec<SkippedRep>,
    /// Mean FDP over completed reps; `None` when none completed.
    pub fdr: Option<f64>,
    /// Mean power; `None` without signals or completed reps.
    pub power: Option<f64>,
    pub mc_se_fdr: Option<f64>,
    pub mc_se_power: Option<f64>,
    pub unreliable: bool,
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let k = values.len();
    if k == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (Some(mean), Some((var / k as f64).sqrt()))
}

impl BenchResult {
    fn aggregate(scenario: Scenario, outcomes: Vec<std::result::Result<RepRecord, SkippedRep>>) -> Self {
        let mut per_rep = Vec::new();
        let mut skipped = Vec::new();
        for o in outcomes {
            match o {
                Ok(r) => per_rep.push(r),
                Err(s) => skipped.push(s),
            }
        }
        let fdps: Vec<f64> = per_rep.iter().map(|r| r.fdp).collect();
        let powers: Vec<f64> = per_rep.iter().filter_map(|r| r.power).collect();
        let (fdr, mc_se_fdr) = mean_se(&fdps);
        let (power, mc_se_power) = mean_se(&powers);
        let total = per_rep.len() + skipped.len();
        let unreliable = per_rep.is_empty() || skipped.len() as f64 > UNRELIABLE_SKIP_SHARE * total as f64;
        BenchResult { scenario, per_rep, skipped, fdr, power, mc_se_fdr, mc_se_power, unreliable }
    }

    pub fn csv_header() -> &'static [&'static str] {
        &[
            "scenario", "regime", "family", "n", "p", "p1", "covariance", "r", "signal", "method", "q", "reps", "seed",
            "completed", "skipped", "unreliable", "fdr", "power", "mc_se_fdr", "mc_se_power",
        ]
    }

    /// One table row. Runtimes are left out so reruns are byte-identical.
    pub fn csv_record(&self) -> Vec<String> {
        let sc = &self.scenario;
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".to_string());
        vec![
            sc.label.clone(),
            sc.regime.name().to_string(),
            sc.family.name().to_string(),
            sc.n.to_string(),
            sc.p.to_string(),
            sc.signal.p1.to_string(),
            sc.covariance.kind_name().to_string(),
            sc.covariance.r().to_string(),
            sc.signal.mode.describe(),
            sc.method.to_string(),
            sc.q.to_string(),
            sc.reps.to_string(),
            sc.seed.to_string(),
            self.per_rep.len().to_string(),
            self.skipped.len().to_string(),
            self.unreliable.to_string(),
            num(self.fdr),
            num(self.power),
            num(self.mc_se_fdr),
            num(self.mc_se_power),
        ]
    }
}

/// One replication's data, truth and method seed.
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub beta: DVector<f64>,
    pub s1: Vec<usize>,
    pub method_seed: u64,
}

/// Generates one replication's data and truth.
pub fn generate(sc: &Scenario, sampler: &DesignSampler, rep: usize) -> Result<Generated> {
    let mut rng = substream(sc.seed, rep as u64);
    let (beta, s1) = sample_coefficients(sc.p, sc.n, &sc.signal, &mut rng)?;
    let x = sampler.sample(sc.n, sc.scale, &mut rng);
    let y = sample_response(&x, &beta, sc.family, &mut rng)?;
    let method_seed = rng.next_u64();
    Ok(Generated { data: Dataset::new(x, y, sc.family)?, beta, s1, method_seed })
}

/// Runs the scenario's method on one dataset and returns the selected set.
pub fn run_method(sc: &Scenario, data: &Dataset, seed: u64) -> Result<Vec<usize>> {
    let cfg = MirrorConfig { q: sc.q, f_choice: sc.f_choice, seed };
    let moderate = ModerateOptions { tau: sc.tau, ..Default::default() };
    let high_base = if sc.family.is_gaussian() { BaseSelector::DsHighLinear } else { BaseSelector::DsHighGlm };
    let selected = match (sc.regime, sc.method) {
        (Regime::Moderate, Method::Ds) => ds_moderate(data, &cfg, &moderate)?.selected,
        (Regime::High, Method::Ds) => ds_high_glm(data, &cfg, &sc.rules)?.selected,
        (regime, Method::Mds { m }) => {
            let base = if regime == Regime::Moderate { BaseSelector::DsModerate } else { high_base };
            let opts = MdsOptions { moderate, rules: sc.rules, freeze_lambda: false };
            mds(data, base, m, &cfg, &opts)?.0.selected
        }
        (_, Method::Gm) => gm_moderate(data, &cfg, &moderate)?.selected,
        (_, Method::BhqMle) => {
            let fit = fit_mle(data, &moderate.mle)?;
            benjamini_hochberg(&wald_pvalues_mle(data, &fit)?.pvals, sc.q)?
        }
        (_, Method::BhqDebiased) => benjamini_hochberg(&debiased_lasso_pvalues(data, &sc.rules, seed)?.pvals, sc.q)?,
    };
    Ok(selected)
}

fn replicate(sc: &Scenario, sampler: &DesignSampler, rep: usize) -> std::result::Result<RepRecord, SkippedRep> {
    let start = Instant::now();
    let outcome = generate(sc, sampler, rep).and_then(|g| {
        let selected = run_method(sc, &g.data, g.method_seed)?;
        Ok((selected, g.s1))
    });
    match outcome {
        Ok((selected, s1)) => {
            let (fdp, power) = fdp_power(&selected, &s1);
            Ok(RepRecord { rep, fdp, power, selected: selected.len(), runtime_secs: start.elapsed().as_secs_f64() })
        }
        Err(e) => Err(SkippedRep { rep, reason: format!("{}: {e}", e.tag()) }),
    }
}

/// One replication, deterministic in `(sc, rep)`.
pub fn run_replication(sc: &Scenario, rep: usize) -> Result<RepRecord> {
    sc.validate()?;
    let sampler = DesignSampler::new(&make_covariance(&sc.covariance, sc.p)?)?;
    replicate(sc, &sampler, rep).map_err(|s| FdrError::InvalidInput(format!("replication {rep} skipped: {}", s.reason)))
}

/// Runs every replication of every scenario. Replications fan out across
/// the whole grid; results are merged by `(scenario, rep)`.
pub fn run_bench(grid: &[Scenario]) -> Result<Vec<BenchResult>> {
    if grid.is_empty() {
        return Err(FdrError::InvalidInput("benchmark grid is empty".into()));
    }
    let mut samplers = Vec::with_capacity(grid.len());
    for sc in grid {
        sc.validate()?;
        samplers.push(DesignSampler::new(&make_covariance(&sc.covariance, sc.p)?)?);
    }
    let tasks: Vec<(usize, usize)> = grid
        .iter()
        .enumerate()
        .flat_map(|(s, sc)| (0..sc.reps).map(move |r| (s, r)))
        .collect();
    let mut outcomes = par::map_indexed(tasks.len(), |t| {
        let (s, r) = tasks[t];
        replicate(&grid[s], &samplers[s], r)
    })
    .into_iter();

    Ok(grid
        .iter()
        .map(|sc| {
            let cell: Vec<_> = outcomes.by_ref().take(sc.reps).collect();
            BenchResult::aggregate(sc.clone(), cell)
        })
        .collect())
}
