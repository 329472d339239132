use std::path::{Path, PathBuf};

use clap::Args;
use mirror_fdr::bench::{generate, Method, Regime, Scenario};
use mirror_fdr::datagen::{make_covariance, CovarianceSpec, DesignSampler, DesignScale, SignalSpec};
use serde::Serialize;

use crate::{parse, table, Failure, ResultExt};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Number of relevant features [default: max(1, p/10)]
    #[arg(long)]
    p1: Option<usize>,
    #[arg(long, default_value = "gaussian")]
    family: String,
    #[arg(long)]
    dispersion: Option<f64>,
    /// identity, toeplitz, constant, blockwise, constant_partial, toeplitz_partial
    #[arg(long, default_value = "identity")]
    covariance: String,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    #[arg(long, default_value_t = 10)]
    blocks: usize,
    /// fixed:A, gaussian:SD or rate:K
    #[arg(long, default_value = "fixed:1")]
    signal: String,
    /// Rescale columns to variance 1/n instead of unit population variance.
    #[arg(long)]
    inv_n: bool,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Truth<'a> {
    seed: u64,
    n: usize,
    p: usize,
    p1: usize,
    family: &'a str,
    dispersion: Option<f64>,
    covariance: CovarianceSpec,
    scale: &'a str,
    signal: String,
    response: &'a str,
    /// 1-based feature indices of the support.
    support: Vec<usize>,
    beta: Vec<f64>,
}

pub fn truth_path(out: &Path) -> PathBuf {
    out.with_extension("truth.json")
}

pub fn run(a: SimulateArgs) -> Result<(), Failure> {
    let family = parse::family(&a.family, a.dispersion).usage()?;
    let covariance = parse::covariance(&a.covariance, a.r, a.blocks).usage()?;
    let mode = parse::signal(&a.signal).usage()?;
    if a.n == 0 || a.p == 0 {
        return Err(Failure::usage("n and p must be positive"));
    }
    let p1 = a.p1.unwrap_or((a.p / 10).max(1));
    let scale = if a.inv_n { DesignScale::InvN } else { DesignScale::Unit };
    let signal = SignalSpec { p1, mode };

    let mut sc = Scenario::new(Regime::High, a.n, a.p, family, covariance, signal, Method::Ds);
    sc.scale = scale;
    sc.seed = a.seed;
    let sigma = make_covariance(&covariance, a.p).usage()?;
    let sampler = DesignSampler::new(&sigma).usage()?;
    let g = generate(&sc, &sampler, 0).usage()?;

    let names: Vec<String> = (1..=a.p).map(|j| format!("x{j}")).collect();
    table::write_matrix(&a.out, &names, &g.data.x, &a.response, &g.data.y).usage()?;
    let truth = Truth {
        seed: a.seed,
        n: a.n,
        p: a.p,
        p1,
        family: parse::family_flag(&family),
        dispersion: match family {
            mirror_fdr::GlmFamily::NegativeBinomial { dispersion } => Some(dispersion),
            _ => None,
        },
        covariance,
        scale: if a.inv_n { "inv_n" } else { "unit" },
        signal: mode.describe(),
        response: &a.response,
        support: g.s1.iter().map(|j| j + 1).collect(),
        beta: g.beta.iter().copied().collect(),
    };
    table::write_json(&truth_path(&a.out), &truth).usage()?;
    eprintln!("wrote {} ({} x {}) and {}", a.out.display(), a.n, a.p + 1, truth_path(&a.out).display());
    Ok(())
}
