use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stratified assignment of samples to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    /// Fold index of every sample.
    pub assignment: Vec<usize>,
}

/// Sample indices for one rotation of the cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRoles {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles each class with `seed` and deals it round-robin over the folds,
/// so per-class fold sizes differ by at most one.
pub fn make_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 3 {
        return Err(Error::invalid("need at least 3 folds for train/val/test roles"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![usize::MAX; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::invalid(format!(
                "class {class} has {} samples, fewer than {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        // Continue dealing where the previous class stopped so fold totals
        // stay balanced as well.
        for i in idx {
            assignment[i] = next % k;
            next += 1;
        }
    }
    if assignment.contains(&usize::MAX) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    Ok(FoldSplit { k, assignment })
}

impl FoldSplit {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == f)
            .collect()
    }

    /// Run `r` tests on fold `r`, validates on fold `r + 1` and trains on the rest.
    pub fn run(&self, r: usize) -> RunRoles {
        let test_fold = r % self.k;
        let val_fold = (r + 1) % self.k;
        let mut roles = RunRoles {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (i, &f) in self.assignment.iter().enumerate() {
            if f == test_fold {
                roles.test.push(i);
            } else if f == val_fold {
                roles.val.push(i);
            } else {
                roles.train.push(i);
            }
        }
        roles
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_samples_one_per_class_per_fold() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let s = make_folds(&labels, 5, 4).unwrap();
        for f in 0..5 {
            let members = s.fold(f);
            assert_eq!(members.len(), 2);
            assert_eq!(members.iter().filter(|&&i| labels[i] == 1).count(), 1);
        }
        assert_eq!(s, make_folds(&labels, 5, 4).unwrap());
    }

    #[test]
    fn rotation_covers_each_fold_once() {
        let labels: Vec<u8> = (0..23).map(|i| u8::from(i % 3 == 0)).collect();
        let s = make_folds(&labels, 5, 1).unwrap();
        let mut as_test = [0; 23];
        let mut as_val = [0; 23];
        for r in 0..5 {
            let roles = s.run(r);
            assert_eq!(roles.train.len() + roles.val.len() + roles.test.len(), 23);
            roles.test.iter().for_each(|&i| as_test[i] += 1);
            roles.val.iter().for_each(|&i| as_val[i] += 1);
        }
        assert!(as_test.iter().all(|&c| c == 1));
        assert!(as_val.iter().all(|&c| c == 1));
    }

    #[test]
    fn too_few_per_class() {
        assert!(make_folds(&[0, 0, 0, 0, 0, 1, 1], 5, 0).is_err());
    }
}
