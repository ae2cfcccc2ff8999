use super::EvalError;
use crate::trajectory::THRESHOLD;

/// One scored participant-day.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub participant_id: String,
    pub day: i64,
    pub score: f64,
    pub label: bool,
    pub symptom_count: u32,
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Area under the ROC curve as the normalised Mann-Whitney U statistic;
/// tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), labels.len());
    let (np, nn) = class_counts(labels);
    if np == 0 || nn == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of the positives, using mid-ranks for ties.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        twice_rank_sum += twice_mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - (np * (np + 1)) as u64;
    Ok(twice_u as f64 / (2 * np * nn) as f64)
}

/// Sensitivity and specificity at `threshold`; scores equal to the
/// threshold are called positive.
pub fn sens_spec(scores: &[f64], labels: &[bool], threshold: f64) -> Result<(f64, f64), EvalError> {
    assert_eq!(scores.len(), labels.len());
    let (np, nn) = class_counts(labels);
    if np == 0 || nn == 0 {
        return Err(EvalError::SingleClass);
    }
    let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= threshold).count();
    let tn = scores.iter().zip(labels).filter(|(&s, &l)| !l && s < threshold).count();
    Ok((tp as f64 / np as f64, tn as f64 / nn as f64))
}

/// Pearson correlation of two series; `None` if either is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Point-biserial correlation γ_pb between probabilities and 0/1 labels.
pub fn point_biserial(probs: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    pearson(probs, &y).ok_or(EvalError::ConstantInput)
}

/// Fraction of days whose thresholded prediction matches the label (γ).
pub fn participant_accuracy(probs: &[f64], labels: &[bool], threshold: f64) -> Result<f64, EvalError> {
    assert_eq!(probs.len(), labels.len());
    if probs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let ok = probs.iter().zip(labels).filter(|(&p, &l)| (p >= threshold) == l).count();
    Ok(ok as f64 / probs.len() as f64)
}

/// Per-participant progression score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProgressionScore {
    /// Labels change at least once: point-biserial correlation.
    PointBiserial(f64),
    /// Labels never change: accuracy.
    Accuracy(f64),
}

impl ProgressionScore {
    pub fn value(self) -> f64 {
        match self {
            ProgressionScore::PointBiserial(v) | ProgressionScore::Accuracy(v) => v,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            ProgressionScore::PointBiserial(_) => "gamma_pb",
            ProgressionScore::Accuracy(_) => "gamma",
        }
    }
}

/// γ_pb when the labels change, γ otherwise. Constant probabilities against
/// changing labels carry no correlation and score 0.
pub fn progression_score(probs: &[f64], labels: &[bool]) -> Result<ProgressionScore, EvalError> {
    if probs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if labels.windows(2).any(|w| w[0] != w[1]) {
        Ok(ProgressionScore::PointBiserial(point_biserial(probs, labels).unwrap_or(0.0)))
    } else {
        Ok(ProgressionScore::Accuracy(participant_accuracy(probs, labels, THRESHOLD)?))
    }
}

/// Unweighted mean of mixed γ_pb / γ values.
pub fn progression_summary(scores: &[ProgressionScore]) -> Option<f64> {
    (!scores.is_empty()).then(|| scores.iter().map(|s| s.value()).sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut twice = 0u64;
        let (mut np, mut nn) = (0u64, 0u64);
        for (i, &li) in labels.iter().enumerate() {
            if li {
                np += 1;
            } else {
                nn += 1;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    twice += if scores[i] > scores[j] { 2 } else if scores[i] == scores[j] { 1 } else { 0 };
                }
            }
        }
        twice as f64 / (2 * np * nn) as f64
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass)));
    }

    proptest! {
        #[test]
        fn auroc_equals_pairwise_count(pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..120)) {
            let scores: Vec<f64> = pairs.iter().map(|p| f64::from(p.0) / 20.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            prop_assert_eq!(auroc(&scores, &labels).unwrap(), pairwise(&scores, &labels));
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
            prop_assert_eq!(auroc(&warped, &labels).unwrap(), auroc(&scores, &labels).unwrap());
            let (a, b) = sens_spec(&scores, &labels, 0.5).unwrap();
            let (c, d) = sens_spec(&warped, &labels, 1.5f64.exp()).unwrap();
            prop_assert_eq!((a, b), (c, d));
        }
    }

    #[test]
    fn sens_spec_examples() {
        assert_eq!(sens_spec(&[0.9, 0.8, 0.1], &[true, true, false], 0.5).unwrap(), (1.0, 1.0));
        assert_eq!(sens_spec(&[0.6; 4], &[true, true, false, false], 0.5).unwrap(), (1.0, 0.0));
        assert_eq!(sens_spec(&[0.5, 0.4], &[true, false], 0.5).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn point_biserial_examples() {
        assert!((point_biserial(&[1.0, 1.0, 0.0, 0.0], &[true, true, false, false]).unwrap() - 1.0).abs() < 1e-15);
        let g = point_biserial(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        // mean difference 0.7, population sd of probs sqrt(0.125), p=q=0.5
        let expected = 0.7 * 0.5 / 0.125f64.sqrt();
        assert!((g - expected).abs() < 1e-12 && (g - 0.98995).abs() < 1e-5);
        assert!(matches!(point_biserial(&[0.2, 0.3], &[true, true]), Err(EvalError::ConstantInput)));
    }

    #[test]
    fn accuracy_and_dispatch() {
        assert_eq!(participant_accuracy(&[0.9, 0.7], &[true, true], 0.5).unwrap(), 1.0);
        assert_eq!(participant_accuracy(&[0.9, 0.7, 0.2, 0.6], &[true, true, false, false], 0.5).unwrap(), 0.75);
        assert!(participant_accuracy(&[], &[], 0.5).is_err());
        assert!(matches!(progression_score(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), ProgressionScore::PointBiserial(_)));
        assert!(matches!(progression_score(&[0.9, 0.8, 0.7], &[true; 3]).unwrap(), ProgressionScore::Accuracy(_)));
        let s = [ProgressionScore::PointBiserial(1.0), ProgressionScore::Accuracy(1.0)];
        assert_eq!(progression_summary(&s), Some(1.0));
    }
}
