//! Synthetic designs, sparse coefficient vectors and GLM responses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FdrError, Result};
use crate::linalg;
use crate::model::GlmFamily;

/// Linear predictors are clamped to this magnitude inside the count samplers.
pub const PREDICTOR_CLAMP: f64 = 30.0;

fn default_blocks() -> usize {
    10
}

/// Correlation structure of the feature distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    Identity,
    /// `Σ_ij = r^|i-j|`
    Toeplitz { r: f64 },
    /// `Σ_ij = r` off the diagonal.
    Constant { r: f64 },
    /// `blocks` identical banded blocks with entries `(p'-1-|i-j|) r / (p'-1)`.
    BlockwiseToeplitz {
        r: f64,
        #[serde(default = "default_blocks")]
        blocks: usize,
    },
    /// Constant correlation pattern imposed on the precision matrix.
    ConstantPartial { r: f64 },
    /// Toeplitz pattern imposed on the precision matrix.
    ToeplitzPartial { r: f64 },
}

impl CovarianceSpec {
    pub fn r(&self) -> f64 {
        match *self {
            CovarianceSpec::Identity => 0.0,
            CovarianceSpec::Toeplitz { r }
            | CovarianceSpec::Constant { r }
            | CovarianceSpec::BlockwiseToeplitz { r, .. }
            | CovarianceSpec::ConstantPartial { r }
            | CovarianceSpec::ToeplitzPartial { r } => r,
        }
    }

    pub fn with_r(self, new_r: f64) -> Self {
        match self {
            CovarianceSpec::Identity => CovarianceSpec::Identity,
            CovarianceSpec::Toeplitz { .. } => CovarianceSpec::Toeplitz { r: new_r },
            CovarianceSpec::Constant { .. } => CovarianceSpec::Constant { r: new_r },
            CovarianceSpec::BlockwiseToeplitz { blocks, .. } => CovarianceSpec::BlockwiseToeplitz { r: new_r, blocks },
            CovarianceSpec::ConstantPartial { .. } => CovarianceSpec::ConstantPartial { r: new_r },
            CovarianceSpec::ToeplitzPartial { .. } => CovarianceSpec::ToeplitzPartial { r: new_r },
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CovarianceSpec::Identity => "identity",
            CovarianceSpec::Toeplitz { .. } => "toeplitz",
            CovarianceSpec::Constant { .. } => "constant",
            CovarianceSpec::BlockwiseToeplitz { .. } => "blockwise_toeplitz",
            CovarianceSpec::ConstantPartial { .. } => "constant_partial",
            CovarianceSpec::ToeplitzPartial { .. } => "toeplitz_partial",
        }
    }
}

fn toeplitz(p: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| r.powi(i.abs_diff(j) as i32))
}

fn constant(p: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { r })
}

/// Inverts a precision pattern and rescales it to a correlation matrix,
/// which leaves the partial correlations unchanged.
fn from_precision(omega: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sigma = linalg::spd_inverse(&omega, "precision pattern")?;
    let d: Vec<f64> = (0..sigma.nrows()).map(|i| sigma[(i, i)].sqrt()).collect();
    let p = sigma.nrows();
    let mut out = DMatrix::from_fn(p, p, |i, j| sigma[(i, j)] / (d[i] * d[j]));
    for i in 0..p {
        out[(i, i)] = 1.0;
    }
    Ok(out)
}

pub fn make_covariance(spec: &CovarianceSpec, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(FdrError::InvalidInput("p must be positive".into()));
    }
    let r = spec.r();
    if !(0.0..1.0).contains(&r) {
        return Err(FdrError::InvalidInput(format!("correlation factor must lie in [0,1), got {r}")));
    }
    let sigma = match *spec {
        CovarianceSpec::Identity => DMatrix::identity(p, p),
        CovarianceSpec::Toeplitz { r } => toeplitz(p, r),
        CovarianceSpec::Constant { r } => constant(p, r),
        CovarianceSpec::BlockwiseToeplitz { r, blocks } => {
            if blocks == 0 || p % blocks != 0 {
                return Err(FdrError::IndivisibleBlocks { p, blocks });
            }
            let width = p / blocks;
            let denom = width.saturating_sub(1) as f64;
            DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    1.0
                } else if i / width != j / width {
                    0.0
                } else {
                    let d = i.abs_diff(j);
                    (width - 1 - d) as f64 * r / denom
                }
            })
        }
        CovarianceSpec::ConstantPartial { r } => from_precision(constant(p, r))?,
        CovarianceSpec::ToeplitzPartial { r } => from_precision(toeplitz(p, r))?,
    };
    linalg::cholesky(&sigma, spec.kind_name())?;
    Ok(sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignScale {
    /// Population variance 1 for every feature.
    #[default]
    Unit,
    /// Each column rescaled to sample variance exactly `1/n`.
    InvN,
}

/// Gaussian row sampler holding the Cholesky factor of `Σ`.
#[derive(Debug, Clone)]
pub struct DesignSampler {
    factor: DMatrix<f64>,
}

impl DesignSampler {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(FdrError::InvalidInput("covariance must be square".into()));
        }
        let chol = linalg::cholesky(sigma, "design covariance")?;
        Ok(DesignSampler { factor: chol.l() })
    }

    pub fn p(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, scale: DesignScale, rng: &mut R) -> DMatrix<f64> {
        let p = self.p();
        let mut z = DMatrix::<f64>::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                z[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let mut x = z * self.factor.transpose();
        if scale == DesignScale::InvN && n > 1 {
            let target = 1.0 / n as f64;
            for mut col in x.column_iter_mut() {
                let mean = col.mean();
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                if var > 0.0 {
                    col *= (target / var).sqrt();
                }
            }
        }
        x
    }
}

pub fn sample_design<R: Rng + ?Sized>(
    n: usize,
    sigma: &DMatrix<f64>,
    scale: DesignScale,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    Ok(DesignSampler::new(sigma)?.sample(n, scale, rng))
}

/// Magnitude rule for the relevant coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalMode {
    /// `|β_j| = magnitude` with a random sign.
    Fixed { magnitude: f64 },
    /// `β_j ~ N(0, sd²)`.
    Gaussian { sd: f64 },
    /// `β_j ~ N(0, sd²)` with `sd = multiple · sqrt(log p / n)`.
    GaussianRate { multiple: f64 },
}

impl SignalMode {
    pub fn describe(&self) -> String {
        match self {
            SignalMode::Fixed { magnitude } => format!("fixed:{magnitude}"),
            SignalMode::Gaussian { sd } => format!("gaussian:{sd}"),
            SignalMode::GaussianRate { multiple } => format!("gaussian_rate:{multiple}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub p1: usize,
    pub mode: SignalMode,
}

/// Draws `β*` and its support `S1` (0-based, ascending).
pub fn sample_coefficients<R: Rng + ?Sized>(
    p: usize,
    n: usize,
    spec: &SignalSpec,
    rng: &mut R,
) -> Result<(DVector<f64>, Vec<usize>)> {
    if spec.p1 > p {
        return Err(FdrError::InvalidInput(format!("p1 = {} exceeds p = {p}", spec.p1)));
    }
    let mut s1 = rand::seq::index::sample(rng, p, spec.p1).into_vec();
    s1.sort_unstable();
    let mut beta = DVector::zeros(p);
    for &j in &s1 {
        beta[j] = match spec.mode {
            SignalMode::Fixed { magnitude } => {
                if rng.random_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            }
            SignalMode::Gaussian { sd } => sd * rng.sample::<f64, _>(StandardNormal),
            SignalMode::GaussianRate { multiple } => {
                let sd = multiple * ((p as f64).ln() / n as f64).sqrt();
                sd * rng.sample::<f64, _>(StandardNormal)
            }
        };
    }
    Ok((beta, s1))
}

pub fn sample_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    family: GlmFamily,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if x.ncols() != beta.len() {
        return Err(FdrError::InvalidInput(format!(
            "design has {} columns but beta has length {}",
            x.ncols(),
            beta.len()
        )));
    }
    family.validate()?;
    let eta = x * beta;
    let mut y = DVector::zeros(x.nrows());
    for (i, &v) in eta.iter().enumerate() {
        y[i] = match family {
            GlmFamily::Gaussian => v + rng.sample::<f64, _>(StandardNormal),
            GlmFamily::Logistic => {
                let p = family.mean(v);
                let draw = Bernoulli::new(p).map_err(|e| FdrError::InvalidInput(e.to_string()))?;
                if draw.sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
            GlmFamily::Poisson => {
                let mu = v.clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP).exp();
                poisson(mu, rng)?
            }
            GlmFamily::NegativeBinomial { dispersion } => {
                let mu = v.clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP).exp();
                let gamma =
                    Gamma::new(dispersion, mu / dispersion).map_err(|e| FdrError::InvalidInput(e.to_string()))?;
                let rate: f64 = gamma.sample(rng);
                if rate > 0.0 {
                    poisson(rate, rng)?
                } else {
                    0.0
                }
            }
        };
    }
    Ok(y)
}

fn poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> Result<f64> {
    let d = Poisson::new(mu).map_err(|e| FdrError::InvalidInput(e.to_string()))?;
    Ok(d.sample(rng))
}
