use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Fold index of every sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldSplit {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment.
///
/// Each class's samples are shuffled and dealt round-robin, continuing the
/// deal where the previous class stopped, so every class is spread as evenly
/// as possible and fold sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, labels: &[usize], seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::config(format!("{n} samples cannot fill {k} folds")));
    }
    if labels.len() != n {
        return Err(Error::config(format!("{} labels for {n} samples", labels.len())));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; n];
    let mut next = 0;
    for (class, members) in by_class.iter_mut().enumerate() {
        if !members.is_empty() && members.len() < k {
            log::warn!("class {class} has {} samples and will be missing from some of the {k} folds", members.len());
        }
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignments[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldSplit { k, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_binary() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let s = kfold_split(10, 5, &labels, 3).unwrap();
        for f in 0..5 {
            let t = s.test_indices(f);
            assert_eq!(t.len(), 2);
            let mut ls: Vec<usize> = t.iter().map(|&i| labels[i]).collect();
            ls.sort();
            assert_eq!(ls, vec![0, 1]);
        }
        assert_eq!(s, kfold_split(10, 5, &labels, 3).unwrap());
    }

    #[test]
    fn remainder_goes_first() {
        let s = kfold_split(11, 5, &[0; 11], 1).unwrap();
        assert_eq!(s.fold_sizes(), vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn errors() {
        assert!(kfold_split(10, 1, &[0; 10], 0).is_err());
        assert!(kfold_split(3, 5, &[0; 3], 0).is_err());
        assert!(kfold_split(10, 5, &[0; 9], 0).is_err());
    }

    #[test]
    fn rare_class_still_assigned() {
        let mut labels = vec![0; 20];
        labels[7] = 1;
        let s = kfold_split(20, 5, &labels, 0).unwrap();
        assert_eq!(s.assignments.len(), 20);
        let sizes = s.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
