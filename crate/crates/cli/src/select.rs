use std::path::{Path, PathBuf};

use clap::Args;
use mirror_fdr::baselines::{benjamini_hochberg, debiased_lasso_pvalues, wald_pvalues_mle};
use mirror_fdr::bench::{Method, Regime};
use mirror_fdr::estimators::fit_mle;
use mirror_fdr::mirror::{ds_high_glm, ds_moderate, gm_moderate, mds, BaseSelector, LambdaRules, MdsOptions};
use mirror_fdr::model::check_q;
use mirror_fdr::{Dataset, MirrorConfig};
use serde::Serialize;

use crate::{parse, table, Failure, ResultExt};

#[derive(Args, Debug)]
pub struct SelectArgs {
    /// Headed numeric CSV.
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long)]
    family: String,
    #[arg(long)]
    dispersion: Option<f64>,
    /// ds, mds, gm, bhq-mle or bhq-debiased
    #[arg(long, default_value = "ds")]
    method: String,
    /// moderate or high [default: moderate when n/2 > p]
    #[arg(long)]
    regime: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    #[arg(long, default_value = "product")]
    f: String,
    /// Splits for MDS.
    #[arg(long)]
    m: Option<usize>,
    /// Main Lasso penalty in the high regime: cv[:K] or theory[:C]
    #[arg(long, default_value = "cv")]
    lambda: String,
    /// Choose the MDS penalty once on the full data.
    #[arg(long)]
    freeze_lambda: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report CSV; the JSON summary goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mirror,
    InclusionRate,
    PValue,
}

#[derive(Serialize)]
struct Summary {
    method: String,
    regime: &'static str,
    family: &'static str,
    dispersion: Option<f64>,
    q: f64,
    f: &'static str,
    m: Option<usize>,
    lambda: String,
    seed: u64,
    n: usize,
    p: usize,
    statistic: Statistic,
    tau_q: Option<f64>,
    fdp_hat: Option<f64>,
    selected_count: usize,
    selected: Vec<String>,
    warnings: Vec<String>,
}

/// Per-feature statistic plus the selection, 0-based.
struct Outcome {
    statistic: Statistic,
    values: Vec<f64>,
    selected: Vec<usize>,
    tau_q: Option<f64>,
    fdp_hat: Option<f64>,
    warnings: Vec<String>,
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

fn regime_of(arg: Option<&str>, n: usize, p: usize) -> Result<Regime, Failure> {
    match arg {
        Some("moderate") => Ok(Regime::Moderate),
        Some("high") => Ok(Regime::High),
        Some(other) => Err(Failure::usage(format!("unknown regime '{other}' (expected moderate or high)"))),
        None if n / 2 > p => Ok(Regime::Moderate),
        None => Ok(Regime::High),
    }
}

fn check_shape(regime: Regime, method: Method, n: usize, p: usize) -> Result<(), Failure> {
    match (regime, method) {
        (Regime::Moderate, Method::BhqDebiased) => {
            Err(Failure::usage("bhq-debiased needs --regime high"))
        }
        (Regime::High, Method::Gm | Method::BhqMle) => {
            Err(Failure::usage(format!("{method} needs --regime moderate")))
        }
        (Regime::Moderate, Method::Ds | Method::Mds { .. }) if n / 2 <= p => Err(Failure::usage(format!(
            "the moderate regime needs n/2 > p for data splitting (n = {n}, p = {p}); try --regime high"
        ))),
        (Regime::Moderate, _) if n <= p + 1 => {
            Err(Failure::usage(format!("the moderate regime needs n > p + 1 (n = {n}, p = {p})")))
        }
        _ => Ok(()),
    }
}

fn run_selector(data: &Dataset, method: Method, regime: Regime, cfg: &MirrorConfig, opts: &MdsOptions) -> mirror_fdr::Result<Outcome> {
    let mirror = |r: mirror_fdr::MirrorResult| Outcome {
        statistic: Statistic::Mirror,
        values: r.mirror,
        selected: r.selected,
        tau_q: r.cutoff,
        fdp_hat: r.fdp_hat,
        warnings: r.warnings,
    };
    let bhq = |pvals: Vec<f64>| -> mirror_fdr::Result<Outcome> {
        let selected = benjamini_hochberg(&pvals, cfg.q)?;
        let tau_q = selected.iter().map(|&j| pvals[j]).reduce(f64::max);
        Ok(Outcome { statistic: Statistic::PValue, values: pvals, selected, tau_q, fdp_hat: None, warnings: vec![] })
    };
    Ok(match (regime, method) {
        (Regime::Moderate, Method::Ds) => mirror(ds_moderate(data, cfg, &opts.moderate)?),
        (Regime::High, Method::Ds) => mirror(ds_high_glm(data, cfg, &opts.rules)?),
        (_, Method::Mds { m }) => {
            let base = match regime {
                Regime::Moderate => BaseSelector::DsModerate,
                Regime::High if data.family.is_gaussian() => BaseSelector::DsHighLinear,
                Regime::High => BaseSelector::DsHighGlm,
            };
            let (r, _) = mds(data, base, m, cfg, opts)?;
            Outcome { statistic: Statistic::InclusionRate, ..mirror(r) }
        }
        (_, Method::Gm) => mirror(gm_moderate(data, cfg, &opts.moderate)?),
        (_, Method::BhqMle) => {
            let fit = fit_mle(data, &opts.moderate.mle)?;
            bhq(wald_pvalues_mle(data, &fit)?.pvals)?
        }
        (_, Method::BhqDebiased) => bhq(debiased_lasso_pvalues(data, &opts.rules, cfg.seed)?.pvals)?,
    })
}

pub fn run(a: SelectArgs) -> Result<(), Failure> {
    check_q(a.q).usage()?;
    let family = parse::family(&a.family, a.dispersion).usage()?;
    let method = parse::method(&a.method, a.m).usage()?;
    let f_choice = parse::f_choice(&a.f).usage()?;
    let main = parse::lambda(&a.lambda).usage()?;

    let loaded = table::load(&a.data, &a.response).usage()?;
    let data = Dataset::new(loaded.x, loaded.y, family).usage()?;
    let (n, p) = (data.n(), data.p());
    let regime = regime_of(a.regime.as_deref(), n, p)?;
    check_shape(regime, method, n, p)?;

    let cfg = MirrorConfig { q: a.q, f_choice, seed: a.seed };
    let opts = MdsOptions {
        rules: LambdaRules { main, ..Default::default() },
        freeze_lambda: a.freeze_lambda,
        ..Default::default()
    };
    let out = run_selector(&data, method, regime, &cfg, &opts).method()?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }

    let mut w = csv::Writer::from_path(&a.out).usage()?;
    w.write_record(["feature", "statistic", "selected"]).usage()?;
    for (j, name) in loaded.names.iter().enumerate() {
        let sel = out.selected.binary_search(&j).is_ok();
        w.write_record([name.as_str(), &out.values[j].to_string(), if sel { "true" } else { "false" }])
            .usage()?;
    }
    w.flush().usage()?;

    let summary = Summary {
        method: method.to_string(),
        regime: regime.name(),
        family: parse::family_flag(&family),
        dispersion: match family {
            mirror_fdr::GlmFamily::NegativeBinomial { dispersion } => Some(dispersion),
            _ => None,
        },
        q: a.q,
        f: f_choice.name(),
        m: match method {
            Method::Mds { m } => Some(m),
            _ => None,
        },
        lambda: main.to_string(),
        seed: a.seed,
        n,
        p,
        statistic: out.statistic,
        tau_q: out.tau_q,
        fdp_hat: out.fdp_hat,
        selected_count: out.selected.len(),
        selected: out.selected.iter().map(|&j| loaded.names[j].clone()).collect(),
        warnings: out.warnings,
    };
    table::write_json(&summary_path(&a.out), &summary).usage()?;
    println!("{}: selected {} of {} features at q = {}", method, out.selected.len(), p, a.q);
    Ok(())
}
