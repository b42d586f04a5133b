//! Classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub balanced_accuracy: f64,
    pub real_accuracy: f64,
    pub fake_accuracy: f64,
    pub real_count: usize,
    pub fake_count: usize,
}

/// Per-class accuracies at `threshold`; label 0 is real, 1 is fake.
pub fn class_accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> Result<ClassAccuracy> {
    if probs.len() != labels.len() {
        return Err(Error::dim("probabilities and labels differ in length"));
    }
    let mut hits = [0usize; 2];
    let mut counts = [0usize; 2];
    for (&p, &y) in probs.iter().zip(labels) {
        let c = y as usize;
        counts[c] += 1;
        if (p >= threshold) == (y == 1) {
            hits[c] += 1;
        }
    }
    if counts.contains(&0) {
        return Err(Error::Data(
            "balanced accuracy needs both real and fake samples".into(),
        ));
    }
    let real = hits[0] as f64 / counts[0] as f64;
    let fake = hits[1] as f64 / counts[1] as f64;
    Ok(ClassAccuracy {
        balanced_accuracy: 0.5 * (real + fake),
        real_accuracy: real,
        fake_accuracy: fake,
        real_count: counts[0],
        fake_count: counts[1],
    })
}

/// Mean of real-class and fake-class accuracy at threshold 0.5.
pub fn balanced_accuracy(probs: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(class_accuracy(probs, labels, 0.5)?.balanced_accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn definition() {
        // 10 reals all right, 10 fakes with 8 right
        let mut probs = vec![0.1; 10];
        let mut labels = vec![0; 10];
        probs.extend([0.9; 8]);
        probs.extend([0.2; 2]);
        labels.extend([1; 10]);
        assert!((balanced_accuracy(&probs, &labels).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(balanced_accuracy(&[0.2, 0.7], &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(balanced_accuracy(&[0.2, 0.7], &[1, 1]), Err(Error::Data(_))));
    }

    proptest! {
        #[test]
        fn invariant_to_duplicating_a_class(
            probs in proptest::collection::vec(0.0f64..1.0, 4..40),
            mask in proptest::collection::vec(any::<bool>(), 40),
            copies in 1usize..4,
        ) {
            let mut labels: Vec<u8> = probs.iter().enumerate().map(|(i, _)| mask[i] as u8).collect();
            labels[0] = 0;
            labels[1] = 1;
            let base = balanced_accuracy(&probs, &labels).unwrap();
            let mut p2 = probs.clone();
            let mut l2 = labels.clone();
            for _ in 0..copies {
                for (p, &y) in probs.iter().zip(&labels) {
                    if y == 1 {
                        p2.push(*p);
                        l2.push(1);
                    }
                }
            }
            prop_assert_eq!(balanced_accuracy(&p2, &l2).unwrap(), base);
        }

        #[test]
        fn monotone_in_each_class(probs in proptest::collection::vec(0.0f64..1.0, 4..40), flip in 0usize..40) {
            let labels: Vec<u8> = (0..probs.len()).map(|i| (i % 2) as u8).collect();
            let base = balanced_accuracy(&probs, &labels).unwrap();
            // turning one wrong prediction right never lowers the metric
            let i = flip % probs.len();
            let mut better = probs.clone();
            better[i] = if labels[i] == 1 { 0.99 } else { 0.01 };
            prop_assert!(balanced_accuracy(&better, &labels).unwrap() >= base);
        }
    }
}
