use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EstimateError, Result};

/// Assignment of rows to K cross-fitting folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

/// Seeded shuffle, then round-robin assignment.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(EstimateError::BadFolds { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % k;
    }
    Ok(FoldPlan { k, fold_of, seed })
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    /// Evaluation rows of fold `f`, ascending.
    pub fn rows_in(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == f).collect()
    }

    /// Training rows for fold `f` (its complement), ascending.
    pub fn rows_out(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_and_remainder_sizes() {
        assert_eq!(make_folds(6, 3, 1).unwrap().sizes(), vec![2, 2, 2]);
        let mut s = make_folds(7, 3, 1).unwrap().sizes();
        s.sort();
        assert_eq!(s, vec![2, 2, 3]);
        assert_eq!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 9).unwrap());
        assert!(make_folds(3, 4, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn sizes_differ_by_at_most_one(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let plan = make_folds(n, k, seed).unwrap();
            let s = plan.sizes();
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            prop_assert_eq!(s.iter().sum::<usize>(), n);
            let mut all: Vec<usize> = (0..k).flat_map(|f| plan.rows_in(f)).collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
