//! AUC and log loss.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{logloss, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub logloss: f64,
    pub n: usize,
    pub positives: usize,
}

/// Area under the ROC curve via the Mann–Whitney rank statistic. Tied scores
/// share their average rank, so a tied positive/negative pair counts ½.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Metric(format!("label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(
            "AUC is undefined unless both classes are present".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of 1-based midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += midrank * tied_pos as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Metric("cannot evaluate an empty dataset".into()));
    }
    let preds = model.predict_all(&dataset.instances)?;
    let labels = dataset.labels();
    Ok(EvalReport {
        auc: auc(&preds, &labels)?,
        logloss: logloss(&preds, &labels)?,
        n: labels.len(),
        positives: dataset.positives(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_is_half() {
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::Metric(_))));
        assert!(matches!(auc(&[0.1], &[0, 1]), Err(Error::Metric(_))));
    }

    #[test]
    fn matches_pairwise_on_random_cases() {
        let mut rng = Rng::new(11);
        let scores: Vec<f64> = (0..200).map(|_| (rng.below(30) as f64) / 7.0).collect();
        let mut labels: Vec<u8> = (0..200).map(|_| rng.below(2) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let fast = auc(&scores, &labels).unwrap();
        assert!((fast - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn monotone_transform_invariant(
            raw in prop::collection::vec((-5.0f64..5.0, 0u8..2), 2..80)
        ) {
            let mut labels: Vec<u8> = raw.iter().map(|r| r.1).collect();
            labels[0] = 0;
            labels[1] = 1;
            let s: Vec<f64> = raw.iter().map(|r| (r.0 * 4.0).round() / 4.0).collect();
            let t: Vec<f64> = s.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(auc(&s, &labels).unwrap(), auc(&t, &labels).unwrap());
        }

        #[test]
        fn flipped_labels_complement(
            raw in prop::collection::vec((-5.0f64..5.0, 0u8..2), 2..80)
        ) {
            let mut labels: Vec<u8> = raw.iter().map(|r| r.1).collect();
            labels[0] = 0;
            labels[1] = 1;
            let s: Vec<f64> = raw.iter().map(|r| r.0.round()).collect();
            let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
            let sum = auc(&s, &labels).unwrap() + auc(&s, &flipped).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
