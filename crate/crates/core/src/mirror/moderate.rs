//! Selectors for the regime `p < n`, built on the unpenalized MLE.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::split::random_split;
use super::stats::{mirror_statistics, select};
use crate::error::{FdrError, Result};
use crate::estimators::mle::{fit_mle, MleOptions};
use crate::estimators::nodewise::{conditional_variances, TauMethod};
use crate::linalg;
use crate::model::{check_q, Dataset, MirrorConfig, MirrorResult};
use crate::par;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModerateOptions {
    pub tau: TauMethod,
    pub mle: MleOptions,
}

/// Data splitting with normalized MLEs `T_j = τ̂_j β̂_j` on each half.
pub fn ds_moderate(data: &Dataset, cfg: &MirrorConfig, opts: &ModerateOptions) -> Result<MirrorResult> {
    ds_moderate_with(data, cfg, opts, &mut substream(cfg.seed, 0))
}

pub fn ds_moderate_with<R: Rng + ?Sized>(
    data: &Dataset,
    cfg: &MirrorConfig,
    opts: &ModerateOptions,
    rng: &mut R,
) -> Result<MirrorResult> {
    check_q(cfg.q)?;
    let half = data.n() / 2;
    if half <= data.p() {
        return Err(FdrError::InsufficientSamples { half, p: data.p() });
    }
    let split = random_split(data, rng);
    let parts = [&split.part1, &split.part2];
    let fits = par::map_indexed(2, |k| -> Result<(Vec<f64>, Vec<String>)> {
        let part = parts[k];
        let tau_sq = conditional_variances(&part.x, opts.tau)?;
        let fit = fit_mle(part, &opts.mle)?;
        let t = tau_sq.iter().zip(fit.beta_hat.iter()).map(|(t2, b)| t2.sqrt() * b).collect();
        Ok((t, fit.warnings))
    });
    let mut it = fits.into_iter();
    let (t1, w1) = it.next().unwrap()?;
    let (t2, w2) = it.next().unwrap()?;

    let m = mirror_statistics(&t1, &t2, cfg.f_choice)?;
    let mut result = select(m, cfg.q)?;
    result.t_pair = Some((t1, t2));
    result.warnings.extend(w1.into_iter().map(|w| format!("half 1: {w}")));
    result.warnings.extend(w2.into_iter().map(|w| format!("half 2: {w}")));
    Ok(result)
}

/// The pair of perturbed copies `X_j ± c_j Z_j` of one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMirrorAugment {
    pub j: usize,
    pub z: DVector<f64>,
    pub c: f64,
    pub xp: DVector<f64>,
    pub xm: DVector<f64>,
}

impl GaussianMirrorAugment {
    /// `c_j = ‖P⊥ X_j‖ / ‖P⊥ Z_j‖`, with `P⊥` projecting off the span of the
    /// other columns.
    pub fn new(x: &DMatrix<f64>, j: usize, z: DVector<f64>) -> Result<Self> {
        let xj = x.column(j).into_owned();
        if z.len() != x.nrows() {
            return Err(FdrError::InvalidInput("perturbation length differs from design rows".into()));
        }
        let (rx, rz) = if x.ncols() == 1 {
            (xj.clone(), z.clone())
        } else {
            let q = linalg::without_column(x, j).qr().q();
            let proj = |v: &DVector<f64>| v - &q * q.tr_mul(v);
            (proj(&xj), proj(&z))
        };
        let denom = rz.norm();
        if !(denom > 0.0) {
            return Err(FdrError::RankDeficient { feature: j });
        }
        let c = rx.norm() / denom;
        let xp = &xj + &z * c;
        let xm = &xj - &z * c;
        Ok(GaussianMirrorAugment { j, z, c, xp, xm })
    }

    /// `(X_-j, X_j⁺, X_j⁻)`.
    pub fn design(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut d = linalg::without_column(x, self.j).resize_horizontally(x.ncols() + 1, 0.0);
        let k = x.ncols() - 1;
        d.set_column(k, &self.xp);
        d.set_column(k + 1, &self.xm);
        d
    }
}

fn gm_feature(data: &Dataset, j: usize, tau_sq: f64, seed: u64, opts: &MleOptions) -> Result<(f64, f64)> {
    let mut rng = substream(seed, j as u64);
    let z = DVector::from_fn(data.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let aug = GaussianMirrorAugment::new(&data.x, j, z)?;
    let design = aug.design(&data.x);
    let fit = fit_mle(&Dataset { x: design, y: data.y.clone(), family: data.family }, opts)?;
    let k = data.p() - 1;
    let scale = (tau_sq + aug.c * aug.c).sqrt();
    Ok((scale * fit.beta_hat[k], scale * fit.beta_hat[k + 1]))
}

/// Gaussian mirror: one augmented MLE fit per feature on the full data.
/// A feature whose fit fails gets `M_j = 0` and a warning.
pub fn gm_moderate(data: &Dataset, cfg: &MirrorConfig, opts: &ModerateOptions) -> Result<MirrorResult> {
    check_q(cfg.q)?;
    let (n, p) = (data.n(), data.p());
    if n <= p + 1 {
        return Err(FdrError::InsufficientSamples { half: n, p: p + 1 });
    }
    let tau_sq = conditional_variances(&data.x, opts.tau)?;
    let pairs = par::map_indexed(p, |j| gm_feature(data, j, tau_sq[j], cfg.seed, &opts.mle));

    let mut t1 = vec![0.0; p];
    let mut t2 = vec![0.0; p];
    let mut warnings = Vec::new();
    for (j, r) in pairs.into_iter().enumerate() {
        match r {
            Ok((a, b)) => {
                t1[j] = a;
                t2[j] = b;
            }
            Err(e) => warnings.push(format!("feature {}: augmented fit failed ({}); mirror set to 0", j + 1, e.tag())),
        }
    }
    let m = mirror_statistics(&t1, &t2, cfg.f_choice)?;
    let mut result = select(m, cfg.q)?;
    result.t_pair = Some((t1, t2));
    result.warnings = warnings;
    Ok(result)
}
