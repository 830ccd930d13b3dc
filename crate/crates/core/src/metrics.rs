//! Exact, tie-aware ROC-AUC and PR-AUC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no scored examples")]
    Empty,
    #[error("need at least one positive and one negative label")]
    SingleClass,
    #[error("no positive labels")]
    NoPositives,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

/// Scores with binary labels; at least one example.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, MetricsError> {
        if scores.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MetricsError::NonFinite(i));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn num_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// (positives, negatives) per distinct score, in descending score order.
    fn tie_groups_descending(&self) -> Vec<(u64, u64)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut groups: Vec<(u64, u64)> = Vec::new();
        let mut prev: Option<f64> = None;
        for i in order {
            let s = self.scores[i];
            if prev != Some(s) {
                groups.push((0, 0));
                prev = Some(s);
            }
            let g = groups.last_mut().expect("pushed above");
            if self.labels[i] {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }
}

/// Mann-Whitney ROC-AUC: `(#(pos > neg) + #(pos = neg) / 2) / (P * N)`.
pub fn roc_auc(data: &ScoredLabels) -> Result<f64, MetricsError> {
    let groups = data.tie_groups_descending();
    let p: u64 = groups.iter().map(|g| g.0).sum();
    let n: u64 = groups.iter().map(|g| g.1).sum();
    if p == 0 || n == 0 {
        return Err(MetricsError::SingleClass);
    }
    // twice the numerator stays an integer
    let mut twice: u128 = 0;
    let mut neg_below: u64 = n;
    for &(pos, neg) in &groups {
        neg_below -= neg;
        twice += pos as u128 * (2 * neg_below as u128 + neg as u128);
    }
    Ok(twice as f64 / (2.0 * p as f64 * n as f64))
}

/// Average precision: `sum_i (R_i - R_{i-1}) * P_i` over the operating
/// points obtained by lowering the threshold one tie group at a time.
pub fn pr_auc(data: &ScoredLabels) -> Result<f64, MetricsError> {
    let groups = data.tie_groups_descending();
    let p: u64 = groups.iter().map(|g| g.0).sum();
    if p == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut area = 0.0;
    for &(pos, neg) in &groups {
        tp += pos;
        fp += neg;
        if pos > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            area += (pos as f64 / p as f64) * precision;
        }
    }
    Ok(area)
}

/// Link-prediction quality plus timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pr_auc: f64,
    pub roc_auc: f64,
    pub loss: f64,
    pub ms_sampling: f64,
    pub ms_forward: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sl(pos: &[f64], neg: &[f64]) -> ScoredLabels {
        let mut s = pos.to_vec();
        s.extend_from_slice(neg);
        let mut l = vec![true; pos.len()];
        l.extend(vec![false; neg.len()]);
        ScoredLabels::new(s, l).unwrap()
    }

    #[test]
    fn separated_and_tied() {
        assert_eq!(roc_auc(&sl(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
        assert_eq!(roc_auc(&sl(&[0.5], &[0.5])).unwrap(), 0.5);
        assert_eq!(pr_auc(&sl(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
    }

    #[test]
    fn single_positive_ranked_last() {
        assert_eq!(pr_auc(&sl(&[0.1], &[0.4, 0.3, 0.2])).unwrap(), 0.25);
    }

    #[test]
    fn all_equal_scores_balanced() {
        let d = sl(&[0.3, 0.3, 0.3], &[0.3, 0.3, 0.3]);
        assert_eq!(roc_auc(&d).unwrap(), 0.5);
        assert_eq!(pr_auc(&d).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        assert_eq!(
            roc_auc(&sl(&[0.1, 0.2], &[])),
            Err(MetricsError::SingleClass)
        );
        assert_eq!(pr_auc(&sl(&[], &[0.1])), Err(MetricsError::NoPositives));
        assert_eq!(ScoredLabels::new(vec![], vec![]), Err(MetricsError::Empty));
        assert_eq!(
            ScoredLabels::new(vec![f64::NAN], vec![true]),
            Err(MetricsError::NonFinite(0))
        );
        assert!(matches!(
            ScoredLabels::new(vec![0.1], vec![true, false]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }
}
