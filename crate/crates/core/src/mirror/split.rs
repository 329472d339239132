use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::Dataset;

/// Two disjoint halves of a dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub part1: Dataset,
    pub part2: Dataset,
    /// `1` or `2` for every original row.
    pub assignment: Vec<u8>,
    /// Original row indices of each part, ascending.
    pub rows1: Vec<usize>,
    pub rows2: Vec<usize>,
}

/// Uniformly random split; the first part gets `ceil(n/2)` rows.
pub fn random_split<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> SplitPair {
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let k = n.div_ceil(2);
    let mut rows1 = order[..k].to_vec();
    let mut rows2 = order[k..].to_vec();
    rows1.sort_unstable();
    rows2.sort_unstable();
    let mut assignment = vec![2u8; n];
    for &i in &rows1 {
        assignment[i] = 1;
    }
    SplitPair { part1: data.rows(&rows1), part2: data.rows(&rows2), assignment, rows1, rows2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GlmFamily;
    use crate::rng::substream;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn halves_partition_rows() {
        for n in [1usize, 2, 7, 10] {
            let x = DMatrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
            let y = DVector::from_fn(n, |i, _| i as f64);
            let data = Dataset::new(x, y, GlmFamily::Gaussian).unwrap();
            let s = random_split(&data, &mut substream(3, n as u64));
            assert_eq!(s.rows1.len(), n.div_ceil(2));
            assert_eq!(s.rows1.len() + s.rows2.len(), n);
            assert!(s.rows1.iter().all(|i| !s.rows2.contains(i)));
            for (k, &i) in s.rows1.iter().enumerate() {
                assert_eq!(s.part1.y[k], i as f64);
                assert_eq!(s.assignment[i], 1);
            }
            for (k, &i) in s.rows2.iter().enumerate() {
                assert_eq!(s.part2.x[(k, 1)], (i * 2 + 1) as f64);
                assert_eq!(s.assignment[i], 2);
            }
        }
    }
}
