use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows indexed by the true class and columns by the prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_class: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_class: usize) -> Self {
        ConfusionMatrix {
            n_class,
            counts: vec![vec![0; n_class]; n_class],
        }
    }

    pub fn from_pairs(truth: &[usize], predicted: &[usize], n_class: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dims("predictions", truth.len(), predicted.len()));
        }
        let mut cm = ConfusionMatrix::new(n_class);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n_class || predicted >= self.n_class {
            return Err(Error::domain(format!(
                "class pair ({truth}, {predicted}) outside 0..{}",
                self.n_class
            )));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_class != self.n_class {
            return Err(Error::dims("confusion matrix classes", self.n_class, other.n_class));
        }
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, &v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// Recall of `class`, or `None` when the class never occurs.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let total = self.row_total(class);
        (total > 0).then(|| self.counts[class][class] as f64 / total as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| (0..self.n_class).map(|c| self.counts[c][c]).sum::<u64>() as f64 / total as f64)
    }
}

/// Unweighted average recall. Classes that never occur in the ground truth
/// are left out of the mean.
pub fn uar(cm: &ConfusionMatrix) -> Result<f64> {
    let recalls: Vec<f64> = (0..cm.n_class).filter_map(|c| cm.recall(c)).collect();
    if recalls.is_empty() {
        return Err(Error::domain("UAR of an empty confusion matrix"));
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

fn choose2(n: u64) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items. Returns 1
/// when both labelings are trivial in the same way (the index is otherwise
/// 0/0).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("labelings", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::domain("adjusted Rand index of zero items"));
    }
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in a.iter().zip(b) {
        table[i][j] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&v| choose2(v)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / choose2(a.len() as u64);
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_pairs(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(uar(&cm).unwrap(), 1.0);
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn hand_matrix() {
        // class counts 4/3/2 with 2, 3 and 0 correct
        let truth = [0, 0, 0, 0, 1, 1, 1, 2, 2];
        let pred = [0, 0, 1, 2, 1, 1, 1, 0, 1];
        let cm = ConfusionMatrix::from_pairs(&truth, &pred, 3).unwrap();
        assert!((uar(&cm).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_dropped() {
        let cm = ConfusionMatrix::from_pairs(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        assert!((uar(&cm).unwrap() - 0.75).abs() < 1e-15);
        assert!(uar(&ConfusionMatrix::new(3)).is_err());
    }

    #[test]
    fn uniform_guessing_is_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth: Vec<usize> = (0..30_000).map(|i| i % 3).collect();
        let pred: Vec<usize> = truth.iter().map(|_| rng.random_range(0..3)).collect();
        let u = uar(&ConfusionMatrix::from_pairs(&truth, &pred, 3).unwrap()).unwrap();
        assert!((u - 1.0 / 3.0).abs() < 0.01, "uar {u}");
    }

    #[test]
    fn out_of_range_class_is_rejected() {
        assert!(ConfusionMatrix::from_pairs(&[3], &[0], 3).is_err());
        assert!(ConfusionMatrix::from_pairs(&[0, 1], &[0], 3).is_err());
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // pair counts: index 2, row pairs 6, column pairs 3, expected 18/15
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!((v - 0.8 / 3.3).abs() < 1e-12);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn uar_ignores_classwise_duplication(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60),
            reps in prop::collection::vec(1u64..4, 3),
        ) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = ConfusionMatrix::from_pairs(&t, &p, 3).unwrap();
            let mut dup = cm.clone();
            for (c, row) in dup.counts.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v *= reps[c]);
            }
            prop_assert!((uar(&cm).unwrap() - uar(&dup).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn ari_is_symmetric_and_label_invariant(
            a in prop::collection::vec(0usize..4, 2..40),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..3)).collect();
            let ab = adjusted_rand_index(&a, &b).unwrap();
            prop_assert!((ab - adjusted_rand_index(&b, &a).unwrap()).abs() < 1e-12);
            let relabeled: Vec<usize> = a.iter().map(|&v| 3 - v).collect();
            prop_assert!((adjusted_rand_index(&a, &relabeled).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!(ab <= 1.0 + 1e-12);
        }
    }
}
