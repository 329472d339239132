//! String forms shared by flags and run files.

use anyhow::{anyhow, bail, Result};
use mirror_fdr::bench::Method;
use mirror_fdr::datagen::{CovarianceSpec, SignalMode};
use mirror_fdr::estimators::lambda::LambdaRule;
use mirror_fdr::mirror::DEFAULT_SPLITS;
use mirror_fdr::{FChoice, GlmFamily};

pub const DEFAULT_DISPERSION: f64 = 2.0;

fn number(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| anyhow!("bad {what} '{s}'"))
}

/// `gaussian`, `logistic`, `poisson`, `negbin`. The dispersion only
/// matters for `negbin`.
pub fn family(name: &str, dispersion: Option<f64>) -> Result<GlmFamily> {
    let fam = match name {
        "gaussian" => GlmFamily::Gaussian,
        "logistic" => GlmFamily::Logistic,
        "poisson" => GlmFamily::Poisson,
        "negbin" | "negative_binomial" => {
            GlmFamily::NegativeBinomial { dispersion: dispersion.unwrap_or(DEFAULT_DISPERSION) }
        }
        other => bail!("unknown family '{other}' (expected gaussian, logistic, poisson or negbin)"),
    };
    fam.validate()?;
    Ok(fam)
}

pub fn family_flag(fam: &GlmFamily) -> &'static str {
    match fam {
        GlmFamily::NegativeBinomial { .. } => "negbin",
        other => other.name(),
    }
}

/// `ds`, `mds`, `mds:M`, `gm`, `bhq-mle`, `bhq-debiased`. A bare `mds`
/// takes `splits`, or the default split count.
pub fn method(s: &str, splits: Option<usize>) -> Result<Method> {
    let m = match s.split_once(':') {
        Some(("mds", k)) => Method::Mds { m: k.parse().map_err(|_| anyhow!("bad split count in '{s}'"))? },
        Some(_) => bail!("unknown method '{s}'"),
        None => match s {
            "ds" => Method::Ds,
            "mds" => Method::Mds { m: splits.unwrap_or(DEFAULT_SPLITS) },
            "gm" => Method::Gm,
            "bhq-mle" | "bhq_mle" => Method::BhqMle,
            "bhq-debiased" | "bhq_debiased" => Method::BhqDebiased,
            other => bail!("unknown method '{other}' (expected ds, mds, gm, bhq-mle or bhq-debiased)"),
        },
    };
    if m == (Method::Mds { m: 0 }) {
        bail!("MDS needs at least one split");
    }
    Ok(m)
}

pub fn f_choice(s: &str) -> Result<FChoice> {
    match s {
        "min2" => Ok(FChoice::Min2),
        "product" => Ok(FChoice::Product),
        "sum" => Ok(FChoice::Sum),
        other => bail!("unknown mirror function '{other}' (expected min2, product or sum)"),
    }
}

pub fn lambda(s: &str) -> Result<LambdaRule> {
    s.parse::<LambdaRule>().map_err(|e| anyhow!(e))
}

/// `fixed:A`, `gaussian:SD` or `rate:K` (sd = K sqrt(log p / n)).
pub fn signal(s: &str) -> Result<SignalMode> {
    let (head, arg) = s.split_once(':').ok_or_else(|| anyhow!("signal '{s}' needs the form kind:value"))?;
    let v = number(arg, "signal value")?;
    if !(v.is_finite() && v >= 0.0) {
        bail!("signal value must be finite and non-negative, got {v}");
    }
    match head {
        "fixed" => Ok(SignalMode::Fixed { magnitude: v }),
        "gaussian" => Ok(SignalMode::Gaussian { sd: v }),
        "rate" | "gaussian_rate" => Ok(SignalMode::GaussianRate { multiple: v }),
        other => bail!("unknown signal kind '{other}' (expected fixed, gaussian or rate)"),
    }
}

pub fn covariance(kind: &str, r: f64, blocks: usize) -> Result<CovarianceSpec> {
    Ok(match kind {
        "identity" => CovarianceSpec::Identity,
        "toeplitz" => CovarianceSpec::Toeplitz { r },
        "constant" => CovarianceSpec::Constant { r },
        "blockwise" | "blockwise_toeplitz" => CovarianceSpec::BlockwiseToeplitz { r, blocks },
        "constant_partial" => CovarianceSpec::ConstantPartial { r },
        "toeplitz_partial" => CovarianceSpec::ToeplitzPartial { r },
        other => bail!(
            "unknown covariance '{other}' (expected identity, toeplitz, constant, blockwise, constant_partial or toeplitz_partial)"
        ),
    })
}
