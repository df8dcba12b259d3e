use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::UndefinedMetric("empty score vector".into()));
        }
        if scores.len() != labels.len() {
            return Err(Error::UndefinedMetric(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::UndefinedMetric("NaN score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Indices grouped into blocks of equal score, blocks in the given order.
    fn tied_blocks(&self, descending: bool) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            let o = self.scores[a].partial_cmp(&self.scores[b]).unwrap_or(Ordering::Equal);
            if descending {
                o.reverse()
            } else {
                o
            }
        });
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match blocks.last_mut() {
                Some(b) if self.scores[b[0]] == self.scores[i] => b.push(i),
                _ => blocks.push(vec![i]),
            }
        }
        blocks
    }
}

/// Area under the ROC curve via the Mann–Whitney statistic with average
/// ranks, so tied positive/negative pairs count one half.
pub fn auroc(s: &ScoredLabels) -> Result<f64> {
    let n_pos = s.n_positive();
    let n_neg = s.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    let mut rank_sum = 0.0;
    let mut next_rank = 1.0;
    for block in s.tied_blocks(false) {
        let size = block.len() as f64;
        let avg_rank = next_rank + (size - 1.0) / 2.0;
        let pos = block.iter().filter(|&&i| s.labels[i]).count() as f64;
        rank_sum += avg_rank * pos;
        next_rank += size;
    }
    let n_pos = n_pos as f64;
    let u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg as f64))
}

/// Average precision: Σ precision × recall increment over positives in
/// descending score order, each tied block treated as a single cut.
pub fn auprc(s: &ScoredLabels) -> Result<f64> {
    let n_pos = s.n_positive();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive".into()));
    }
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    for block in s.tied_blocks(true) {
        let pos = block.iter().filter(|&&i| s.labels[i]).count();
        tp += pos;
        seen += block.len();
        if pos > 0 {
            ap += (tp as f64 / seen as f64) * (pos as f64 / n_pos as f64);
        }
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn sl(scores: &[f64], labels: &[u8]) -> ScoredLabels {
        ScoredLabels::new(scores.to_vec(), labels.iter().map(|&l| l == 1).collect()).unwrap()
    }

    /// (concordant + ½ ties) / (n₊ n₋) by explicit pair enumeration.
    fn auroc_pairs(s: &ScoredLabels) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in s.labels().iter().enumerate() {
            for (j, &lj) in s.labels().iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if s.scores()[i] > s.scores()[j] {
                        num += 1.0;
                    } else if s.scores()[i] == s.scores()[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    /// Enumerate every distinct threshold, compute (recall, precision) for
    /// `score >= threshold` and integrate with right-rectangles.
    fn auprc_curve(s: &ScoredLabels) -> f64 {
        let mut thresholds: Vec<f64> = s.scores().to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let n_pos = s.n_positive() as f64;
        let mut prev_recall = 0.0;
        let mut area = 0.0;
        for t in thresholds {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for (score, label) in s.scores().iter().zip(s.labels()) {
                if *score >= t {
                    if *label {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            let recall = tp / n_pos;
            area += (recall - prev_recall) * tp / (tp + fp);
            prev_recall = recall;
        }
        area
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&sl(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(auroc(&sl(&[0.4; 6], &[1, 0, 1, 0, 0, 0])).unwrap(), 0.5);
        let s = sl(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]);
        assert_eq!(auroc_pairs(&s), 0.75);
        assert_eq!(auroc(&s).unwrap(), 0.75);
        assert!(matches!(auroc(&sl(&[0.1, 0.2], &[1, 1])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&sl(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0])).unwrap(), 1.0);
        let s = sl(&[0.9, 0.7, 0.6, 0.2], &[1, 0, 1, 0]);
        let expect = 1.0 * 0.5 + (2.0 / 3.0) * 0.5;
        assert!((auprc_curve(&s) - expect).abs() < 1e-15);
        assert!((auprc(&s).unwrap() - expect).abs() < 1e-15);
        assert!(auprc(&sl(&[0.1, 0.2], &[0, 0])).is_err());
        // A tied block containing every item gives precision = positivity.
        assert!((auprc(&sl(&[0.5; 4], &[1, 0, 0, 0])).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(ScoredLabels::new(vec![0.1], vec![true, false]).is_err());
        assert!(ScoredLabels::new(vec![], vec![]).is_err());
    }

    #[test]
    fn random_classifier_expectation_small() {
        let mut rng = SplitMix64::new(11);
        let (mut roc, mut pr) = (0.0, 0.0);
        let trials = 200;
        for _ in 0..trials {
            let labels: Vec<bool> = (0..500).map(|_| rng.bernoulli(0.11)).collect();
            let scores: Vec<f64> = (0..500).map(|_| rng.next_f64()).collect();
            let s = ScoredLabels::new(scores, labels).unwrap();
            roc += auroc(&s).unwrap();
            pr += auprc(&s).unwrap();
        }
        assert!((roc / trials as f64 - 0.5).abs() < 0.02);
        assert!((pr / trials as f64 - 0.11).abs() < 0.02);
    }

    fn arb_scored() -> impl Strategy<Value = ScoredLabels> {
        (2usize..=50)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u8..12, n),
                    proptest::collection::vec(any::<bool>(), n),
                )
            })
            .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
            .prop_map(|(s, l)| ScoredLabels::new(s.into_iter().map(|v| v as f64 / 11.0).collect(), l).unwrap())
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_oracle(s in arb_scored()) {
            prop_assert_eq!(auroc(&s).unwrap(), auroc_pairs(&s));
        }

        #[test]
        fn auprc_matches_curve_oracle(s in arb_scored()) {
            prop_assert!((auprc(&s).unwrap() - auprc_curve(&s)).abs() < 1e-12);
        }

        #[test]
        fn monotone_transform_invariance(s in arb_scored()) {
            let t = ScoredLabels::new(s.scores().iter().map(|x| (3.0 * x).exp() - 2.0).collect(), s.labels().to_vec()).unwrap();
            prop_assert_eq!(auroc(&s).unwrap(), auroc(&t).unwrap());
            prop_assert!((auprc(&s).unwrap() - auprc(&t).unwrap()).abs() < 1e-15);
        }

        #[test]
        fn complement_sums_to_one(labels in proptest::collection::vec(any::<bool>(), 2..40)) {
            prop_assume!(labels.iter().any(|&x| x) && labels.iter().any(|&x| !x));
            // Distinct scores: a permutation of 0..n scaled into (0, 1).
            let n = labels.len();
            let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect();
            let s = ScoredLabels::new(scores.clone(), labels.clone()).unwrap();
            let c = ScoredLabels::new(scores.iter().map(|x| 1.0 - x).collect(), labels).unwrap();
            prop_assert!((auroc(&s).unwrap() + auroc(&c).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
