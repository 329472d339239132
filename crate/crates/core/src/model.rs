//! GLM families, datasets and the selection result types shared by every
//! selector.
//!
//! Features are indexed from 0 internally. Reports produced by the CLI
//! convert to 1-based labels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FdrError, Result};

/// Floor applied to the second derivative of the loss when it is used as an
/// IRLS / proximal-Newton weight.
pub const WEIGHT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GlmFamily {
    Gaussian,
    Logistic,
    Poisson,
    /// Log-link negative binomial with a known dispersion `r` (the target
    /// number of successful trials).
    NegativeBinomial { dispersion: f64 },
}

/// Loss value and its first two derivatives in the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub dot: f64,
    pub ddot: f64,
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl GlmFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GlmFamily::Gaussian => "gaussian",
            GlmFamily::Logistic => "logistic",
            GlmFamily::Poisson => "poisson",
            GlmFamily::NegativeBinomial { .. } => "negative_binomial",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, GlmFamily::Gaussian)
    }

    pub fn validate(&self) -> Result<()> {
        if let GlmFamily::NegativeBinomial { dispersion } = *self {
            if !(dispersion.is_finite() && dispersion > 0.0) {
                return Err(FdrError::InvalidInput(format!(
                    "negative binomial dispersion must be positive, got {dispersion}"
                )));
            }
        }
        Ok(())
    }

    pub fn in_support(&self, y: f64) -> bool {
        if !y.is_finite() {
            return false;
        }
        match self {
            GlmFamily::Gaussian => true,
            GlmFamily::Logistic => y == 0.0 || y == 1.0,
            GlmFamily::Poisson | GlmFamily::NegativeBinomial { .. } => y >= 0.0 && y.fract() == 0.0,
        }
    }

    pub fn check_support(&self, y: f64) -> Result<()> {
        if self.in_support(y) {
            Ok(())
        } else {
            Err(FdrError::Domain { family: self.name(), y })
        }
    }

    /// `loss(y, v)`, `d/dv` and `d²/dv²` without a support check.
    ///
    /// Canonical families use `loss = -y v + rho(v)`. The negative binomial
    /// uses `-y v + (y + r) log(r + e^v)`, which is its negative
    /// log-likelihood under the log link up to a term free of `v`.
    pub fn eval(&self, y: f64, v: f64) -> LossEval {
        match *self {
            GlmFamily::Gaussian => LossEval {
                loss: -y * v + 0.5 * v * v,
                dot: v - y,
                ddot: 1.0,
            },
            GlmFamily::Logistic => {
                let s = sigmoid(v);
                LossEval {
                    loss: -y * v + softplus(v),
                    dot: s - y,
                    ddot: s * (1.0 - s),
                }
            }
            GlmFamily::Poisson => {
                let e = v.exp();
                LossEval {
                    loss: -y * v + e,
                    dot: e - y,
                    ddot: e,
                }
            }
            GlmFamily::NegativeBinomial { dispersion: r } => {
                // log(r + e^v) = log r + softplus(v - log r)
                let shift = v - r.ln();
                let s = sigmoid(shift);
                LossEval {
                    loss: -y * v + (y + r) * (r.ln() + softplus(shift)),
                    dot: -y + (y + r) * s,
                    ddot: (y + r) * s * (1.0 - s),
                }
            }
        }
    }

    /// `inf_v loss(y, v)`, the loss of the saturated model.
    pub fn saturated_loss(&self, y: f64) -> f64 {
        match *self {
            GlmFamily::Gaussian => -0.5 * y * y,
            GlmFamily::Logistic => 0.0,
            GlmFamily::Poisson if y > 0.0 => y - y * y.ln(),
            GlmFamily::Poisson => 0.0,
            GlmFamily::NegativeBinomial { dispersion: r } if y > 0.0 => -y * y.ln() + (y + r) * (y + r).ln(),
            GlmFamily::NegativeBinomial { dispersion: r } => r * r.ln(),
        }
    }

    /// Mean of the response given the linear predictor.
    pub fn mean(&self, v: f64) -> f64 {
        match self {
            GlmFamily::Gaussian => v,
            GlmFamily::Logistic => sigmoid(v),
            GlmFamily::Poisson | GlmFamily::NegativeBinomial { .. } => v.exp(),
        }
    }
}

/// Checked loss evaluation.
pub fn loss_eval(family: GlmFamily, y: f64, v: f64) -> Result<LossEval> {
    family.validate()?;
    family.check_support(y)?;
    if !v.is_finite() {
        return Err(FdrError::InvalidInput(format!("linear predictor must be finite, got {v}")));
    }
    Ok(family.eval(y, v))
}

/// Design matrix, response and family.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub family: GlmFamily,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, family: GlmFamily) -> Result<Self> {
        family.validate()?;
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(FdrError::InvalidInput(format!(
                "design must be at least 1x1, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.nrows() != y.len() {
            return Err(FdrError::InvalidInput(format!(
                "design has {} rows but response has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FdrError::InvalidInput("design contains non-finite entries".into()));
        }
        for &yi in y.iter() {
            family.check_support(yi)?;
        }
        Ok(Dataset { x, y, family })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Sub-dataset made of the given rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select_rows(idx.iter());
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        Dataset { x, y, family: self.family }
    }

    /// Mean loss `(1/n) Σ loss(y_i, x_iᵀ beta)`.
    pub fn mean_loss(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.x * beta;
        let total: f64 = self
            .y
            .iter()
            .zip(eta.iter())
            .map(|(&y, &v)| self.family.eval(y, v).loss)
            .sum();
        total / self.n() as f64
    }
}

/// Bivariate combination `f(|t1|, |t2|)` used by the mirror statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FChoice {
    /// `2 min(u, v)`
    Min2,
    /// `u v`
    #[default]
    Product,
    /// `u + v`
    Sum,
}

impl FChoice {
    pub fn apply(self, u: f64, v: f64) -> f64 {
        match self {
            FChoice::Min2 => 2.0 * u.min(v),
            FChoice::Product => u * v,
            FChoice::Sum => u + v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FChoice::Min2 => "min2",
            FChoice::Product => "product",
            FChoice::Sum => "sum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorConfig {
    pub q: f64,
    pub f_choice: FChoice,
    pub seed: u64,
}

impl MirrorConfig {
    pub fn new(q: f64, f_choice: FChoice, seed: u64) -> Result<Self> {
        check_q(q)?;
        Ok(MirrorConfig { q, f_choice, seed })
    }
}

impl Default for MirrorConfig {
    fn default() -> Self {
        MirrorConfig { q: 0.1, f_choice: FChoice::Product, seed: 0 }
    }
}

pub fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(FdrError::InvalidInput(format!("q must lie in (0,1), got {q}")))
    }
}

/// Mirror statistics, the data-driven cutoff and the selected features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MirrorResult {
    pub mirror: Vec<f64>,
    /// `None` when no threshold achieves the target FDP estimate.
    pub cutoff: Option<f64>,
    /// Selected features, 0-based, ascending.
    pub selected: Vec<usize>,
    pub fdp_hat: Option<f64>,
    /// The two normalized coefficient vectors the mirror statistics were
    /// built from, when the selector produces them.
    pub t_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub warnings: Vec<String>,
}

/// Realized false discovery proportion and power of a selection.
///
/// The FDP of an empty selection is 0. Power is `None` when `s1` is empty.
pub fn fdp_power(selected: &[usize], s1: &[usize]) -> (f64, Option<f64>) {
    use std::collections::BTreeSet;
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    let truth: BTreeSet<usize> = s1.iter().copied().collect();
    let hits = sel.intersection(&truth).count();
    let fdp = if sel.is_empty() {
        0.0
    } else {
        (sel.len() - hits) as f64 / sel.len() as f64
    };
    let power = if truth.is_empty() {
        None
    } else {
        Some(hits as f64 / truth.len() as f64)
    };
    (fdp, power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn families() -> Vec<GlmFamily> {
        vec![
            GlmFamily::Gaussian,
            GlmFamily::Logistic,
            GlmFamily::Poisson,
            GlmFamily::NegativeBinomial { dispersion: 2.0 },
        ]
    }

    #[test]
    fn logistic_at_zero() {
        let e = loss_eval(GlmFamily::Logistic, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(e.loss, 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(e.dot, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.ddot, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_stationary_at_y() {
        let e = loss_eval(GlmFamily::Gaussian, 2.0, 2.0).unwrap();
        assert_eq!(e.loss, -2.0);
        assert_eq!(e.dot, 0.0);
        assert_eq!(e.ddot, 1.0);
    }

    #[test]
    fn saturated_loss_is_the_infimum() {
        for fam in families() {
            for y in [0.0, 1.0, 3.0] {
                if !fam.in_support(y) {
                    continue;
                }
                let sat = fam.saturated_loss(y);
                let lo = (-400..=400).map(|k| fam.eval(y, k as f64 * 0.05).loss).fold(f64::INFINITY, f64::min);
                assert!(sat <= lo + 1e-12, "{fam:?} y={y}");
                assert!(lo - sat < 1e-3 || y == 0.0 || fam == GlmFamily::Logistic, "{fam:?} y={y}");
                assert!(fam.eval(y, -30.0).loss.min(fam.eval(y, 30.0).loss) - sat > -1e-12);
            }
        }
        assert_abs_diff_eq!(GlmFamily::Poisson.saturated_loss(2.0), GlmFamily::Poisson.eval(2.0, 2f64.ln()).loss);
    }

    #[test]
    fn poisson_derivatives() {
        let e = loss_eval(GlmFamily::Poisson, 3.0, 1.0).unwrap();
        let ee = std::f64::consts::E;
        assert_abs_diff_eq!(e.dot, -3.0 + ee, epsilon = 1e-14);
        assert_abs_diff_eq!(e.ddot, ee, epsilon = 1e-14);
    }

    #[test]
    fn support_errors() {
        assert!(matches!(
            loss_eval(GlmFamily::Logistic, 0.5, 0.0),
            Err(FdrError::Domain { .. })
        ));
        assert!(loss_eval(GlmFamily::Poisson, -1.0, 0.0).is_err());
        assert!(loss_eval(GlmFamily::Poisson, 1.5, 0.0).is_err());
        assert!(loss_eval(GlmFamily::NegativeBinomial { dispersion: 0.0 }, 1.0, 0.0).is_err());
        assert!(loss_eval(GlmFamily::Gaussian, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn negbin_matches_direct_formula() {
        let r = 2.0;
        let fam = GlmFamily::NegativeBinomial { dispersion: r };
        for &(y, v) in &[(0.0, -1.0), (3.0, 0.5), (10.0, 2.0)] {
            let e = fam.eval(y, v);
            let direct = -y * v + (y + r) * (r + f64::exp(v)).ln();
            assert_abs_diff_eq!(e.loss, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn extreme_predictors_stay_finite() {
        for fam in families() {
            for &v in &[-700.0, -50.0, 50.0, 700.0] {
                let y = if fam.is_gaussian() { 0.3 } else { 1.0 };
                if matches!(fam, GlmFamily::Poisson) && v > 700.0 {
                    continue;
                }
                let e = fam.eval(y, v);
                assert!(e.loss.is_finite() && e.dot.is_finite() && e.ddot.is_finite(), "{fam:?} v={v}");
            }
        }
    }

    #[test]
    fn finite_difference_grid() {
        let h = 1e-5;
        for fam in families() {
            let ys: &[f64] = match fam {
                GlmFamily::Gaussian => &[-1.3, 0.0, 2.5],
                GlmFamily::Logistic => &[0.0, 1.0],
                _ => &[0.0, 1.0, 4.0],
            };
            for &y in ys {
                for k in -20..=20 {
                    let v = k as f64 * 0.2;
                    let e = fam.eval(y, v);
                    let fd = (fam.eval(y, v + h).loss - fam.eval(y, v - h).loss) / (2.0 * h);
                    assert!((e.dot - fd).abs() <= 1e-6, "{fam:?} y={y} v={v}: {} vs {fd}", e.dot);
                    let fd2 = (fam.eval(y, v + h).dot - fam.eval(y, v - h).dot) / (2.0 * h);
                    assert!((e.ddot - fd2).abs() <= 1e-6, "{fam:?} y={y} v={v}");
                }
            }
        }
    }

    #[test]
    fn fdp_power_examples() {
        assert_eq!(fdp_power(&[0, 2], &[0, 1]), (0.5, Some(0.5)));
        assert_eq!(fdp_power(&[], &[0]), (0.0, Some(0.0)));
        assert_eq!(fdp_power(&[0, 1], &[0, 1]), (0.0, Some(1.0)));
        assert_eq!(fdp_power(&[3], &[]), (1.0, None));
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_element(3, 2, 1.0);
        assert!(Dataset::new(x.clone(), DVector::from_vec(vec![0.0, 1.0]), GlmFamily::Gaussian).is_err());
        assert!(Dataset::new(x.clone(), DVector::from_vec(vec![0.0, 1.0, 2.0]), GlmFamily::Logistic).is_err());
        let d = Dataset::new(x, DVector::from_vec(vec![0.0, 1.0, 1.0]), GlmFamily::Logistic).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        let sub = d.rows(&[2, 0]);
        assert_eq!(sub.y.as_slice(), &[1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn ddot_nonnegative(v in -40.0f64..40.0, y in 0u32..20, fam_idx in 0usize..4) {
            let fam = families()[fam_idx];
            let y = match fam {
                GlmFamily::Logistic => (y % 2) as f64,
                _ => y as f64,
            };
            prop_assert!(fam.eval(y, v).ddot >= 0.0);
        }

        #[test]
        fn fdp_power_permutation_invariant(
            sel in proptest::collection::btree_set(0usize..30, 0..15),
            truth in proptest::collection::btree_set(0usize..30, 1..10),
            perm_seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..30).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            let sel: Vec<usize> = sel.into_iter().collect();
            let truth: Vec<usize> = truth.into_iter().collect();
            let sel_p: Vec<usize> = sel.iter().map(|&i| perm[i]).collect();
            let truth_p: Vec<usize> = truth.iter().map(|&i| perm[i]).collect();
            prop_assert_eq!(fdp_power(&sel, &truth), fdp_power(&sel_p, &truth_p));
        }

        #[test]
        fn f_choices_monotone(u in 0.0f64..10.0, v in 0.0f64..10.0, du in 0.0f64..5.0) {
            for f in [FChoice::Min2, FChoice::Product, FChoice::Sum] {
                prop_assert!(f.apply(u, v) >= 0.0);
                prop_assert_eq!(f.apply(u, v), f.apply(v, u));
                prop_assert!(f.apply(u + du, v) >= f.apply(u, v));
            }
        }
    }
}
