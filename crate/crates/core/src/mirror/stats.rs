//! Mirror statistics and the data-driven cutoff.

use crate::model::{check_q, FChoice, MirrorResult};
use crate::error::{FdrError, Result};

/// `M_j = sign(t1_j t2_j) f(|t1_j|, |t2_j|)`. A zero in either input gives 0.
pub fn mirror_statistics(t1: &[f64], t2: &[f64], f: FChoice) -> Result<Vec<f64>> {
    if t1.len() != t2.len() {
        return Err(FdrError::InvalidInput(format!(
            "mirror inputs differ in length ({} vs {})",
            t1.len(),
            t2.len()
        )));
    }
    Ok(t1
        .iter()
        .zip(t2)
        .map(|(&a, &b)| {
            let s = a * b;
            if s > 0.0 {
                f.apply(a.abs(), b.abs())
            } else if s < 0.0 {
                -f.apply(a.abs(), b.abs())
            } else {
                0.0
            }
        })
        .collect())
}

/// Smallest `t > 0` with `#{M_j < -t} / #{M_j > t} <= q`.
///
/// The estimated FDP only changes at the values `|M_j|`, so those plus a
/// point just above zero are the only candidates. A zero denominator never
/// qualifies. When the point just above zero qualifies the cutoff is
/// reported as `0.0` and selection is `M_j > 0`. Returns the cutoff and the
/// estimated FDP there, or `None` when no threshold qualifies.
pub fn fdp_cutoff(m: &[f64], q: f64) -> Option<(f64, f64)> {
    let mut pos: Vec<f64> = m.iter().copied().filter(|&v| v > 0.0).collect();
    let mut neg: Vec<f64> = m.iter().filter(|&&v| v < 0.0).map(|v| -v).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);

    let ratio_at = |t: f64| -> Option<f64> {
        let above = pos.len() - pos.partition_point(|&v| v <= t);
        let below = neg.len() - neg.partition_point(|&v| v <= t);
        (above > 0).then(|| below as f64 / above as f64)
    };

    if let Some(r) = ratio_at(0.0) {
        if r <= q {
            return Some((0.0, r));
        }
    }
    let mut candidates: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for t in candidates {
        match ratio_at(t) {
            Some(r) if r <= q => return Some((t, r)),
            Some(_) => {}
            // nothing left above t, so larger t cannot qualify either
            None => break,
        }
    }
    None
}

/// Applies the cutoff to `m` and packages the result.
pub fn select(m: Vec<f64>, q: f64) -> Result<MirrorResult> {
    check_q(q)?;
    let (cutoff, fdp_hat, selected) = match fdp_cutoff(&m, q) {
        Some((t, r)) => {
            let sel = (0..m.len()).filter(|&j| m[j] > t).collect();
            (Some(t), Some(r), sel)
        }
        None => (None, None, Vec::new()),
    };
    Ok(MirrorResult { mirror: m, cutoff, selected, fdp_hat, t_pair: None, warnings: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive scan over a fine grid of thresholds.
    fn brute_selected(m: &[f64], q: f64) -> Vec<usize> {
        let mut ts: Vec<f64> = m.iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
        ts.push(0.0);
        ts.sort_by(f64::total_cmp);
        for t in ts {
            let above = m.iter().filter(|&&v| v > t).count();
            let below = m.iter().filter(|&&v| v < -t).count();
            if above > 0 && (below as f64) <= q * above as f64 {
                return (0..m.len()).filter(|&j| m[j] > t).collect();
            }
        }
        Vec::new()
    }

    #[test]
    fn mirror_examples() {
        let p = FChoice::Product;
        assert_eq!(mirror_statistics(&[1.0, -1.5], &[2.0, 2.0], p).unwrap(), vec![2.0, -3.0]);
        assert_eq!(mirror_statistics(&[3.0], &[1.0], FChoice::Min2).unwrap(), vec![2.0]);
        assert_eq!(mirror_statistics(&[0.0], &[5.0], FChoice::Sum).unwrap(), vec![0.0]);
        assert!(mirror_statistics(&[1.0], &[], p).is_err());
    }

    #[test]
    fn cutoff_examples() {
        let r = select(vec![3.0, 2.0, 1.0, -1.0], 0.5).unwrap();
        assert_eq!(r.cutoff, Some(0.0));
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert!((r.fdp_hat.unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let r = select(vec![-1.0, -2.0, -0.5], 0.1).unwrap();
        assert_eq!(r.cutoff, None);
        assert!(r.selected.is_empty());

        // needs to move past the single negative
        let r = select(vec![5.0, 4.0, 3.0, -2.0, 1.0], 0.3).unwrap();
        assert_eq!(r.cutoff, Some(0.0));
        let r = select(vec![5.0, 4.0, 3.0, -2.0, 1.0], 0.2).unwrap();
        assert_eq!(r.cutoff, Some(2.0));
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert_eq!(r.fdp_hat, Some(0.0));
    }

    #[test]
    fn rejects_bad_q() {
        assert!(select(vec![1.0], 1.5).is_err());
        assert!(select(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn zeros_never_selected() {
        let r = select(vec![0.0, 0.0, 1.0], 0.1).unwrap();
        assert_eq!(r.selected, vec![2]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(m in prop::collection::vec(-5i32..=5, 1..30), q in 0.01f64..0.99) {
            let m: Vec<f64> = m.into_iter().map(f64::from).collect();
            let r = select(m.clone(), q).unwrap();
            prop_assert_eq!(r.selected, brute_selected(&m, q));
        }

        #[test]
        fn scale_free(m in prop::collection::vec(-10.0f64..10.0, 1..40), c in 1e-3f64..10.0, q in 0.01f64..0.99) {
            let a = select(m.clone(), q).unwrap();
            let b = select(m.iter().map(|v| v * c).collect(), q).unwrap();
            prop_assert_eq!(a.selected, b.selected);
        }

        #[test]
        fn monotone_in_q(m in prop::collection::vec(-10.0f64..10.0, 1..40), q1 in 0.01f64..0.99, q2 in 0.01f64..0.99) {
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            let a = select(m.clone(), lo).unwrap();
            let b = select(m, hi).unwrap();
            prop_assert!(a.selected.iter().all(|j| b.selected.contains(j)));
        }

        #[test]
        fn cutoff_guarantee(m in prop::collection::vec(-10.0f64..10.0, 1..40), q in 0.01f64..0.99) {
            if let Some((t, _)) = fdp_cutoff(&m, q) {
                let above = m.iter().filter(|&&v| v > t).count();
                let below = m.iter().filter(|&&v| v < -t).count();
                prop_assert!(above > 0 && below as f64 / above as f64 <= q);
            }
        }

        #[test]
        fn f_choices_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0, da in 0.0f64..5.0, neg in any::<bool>()) {
            let s = if neg { -1.0 } else { 1.0 };
            for f in [FChoice::Min2, FChoice::Product, FChoice::Sum] {
                let before = mirror_statistics(&[a * s], &[b * s], f).unwrap()[0];
                let after = mirror_statistics(&[(a + da) * s], &[b * s], f).unwrap()[0];
                prop_assert!(after >= before);
            }
        }
    }
}
