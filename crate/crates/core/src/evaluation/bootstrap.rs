use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::{auroc, ScoredSample};
use super::EvalError;
use crate::rng::stream;

/// Samples grouped by participant, in id order.
fn by_participant(samples: &[ScoredSample]) -> Vec<Vec<usize>> {
    let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        m.entry(&s.participant_id).or_default().push(i);
    }
    m.into_values().collect()
}

fn check_participants(samples: &[ScoredSample], groups: &[Vec<usize>]) -> Result<(), EvalError> {
    let pos = groups.iter().filter(|g| g.iter().any(|&i| samples[i].label)).count();
    let neg = groups.iter().filter(|g| g.iter().any(|&i| !samples[i].label)).count();
    if pos < 2 || neg < 2 {
        return Err(EvalError::SingleClass);
    }
    Ok(())
}

/// Participant indices drawn with replacement for resample `b`.
fn resample(groups: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = stream(seed, &[b as u64]);
    (0..groups).map(|_| rng.random_range(0..groups)).collect()
}

fn resample_auroc(samples: &[ScoredSample], groups: &[Vec<usize>], draw: &[usize]) -> Option<f64> {
    let (mut s, mut l) = (Vec::new(), Vec::new());
    for &g in draw {
        for &i in &groups[g] {
            s.push(samples[i].score);
            l.push(samples[i].label);
        }
    }
    auroc(&s, &l).ok()
}

/// Sorted AUROCs of participant-level bootstrap resamples. Resamples that
/// happen to contain a single class are left out.
pub fn bootstrap_aurocs(samples: &[ScoredSample], n_boot: usize, seed: u64) -> Result<Vec<f64>, EvalError> {
    let groups = by_participant(samples);
    check_participants(samples, &groups)?;
    let mut v: Vec<f64> = (0..n_boot).into_par_iter().filter_map(|b| resample_auroc(samples, &groups, &resample(groups.len(), seed, b))).collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile interval of a sorted bootstrap distribution.
pub fn percentile_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let a = (1.0 - level) / 2.0;
    (quantile(sorted, a), quantile(sorted, 1.0 - a))
}

/// Participant-level percentile bootstrap interval of the AUROC, widened if
/// needed so that it contains the point estimate.
pub fn bootstrap_ci(samples: &[ScoredSample], n_boot: usize, level: f64, seed: u64) -> Result<(f64, f64), EvalError> {
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let point = auroc(&scores, &labels)?;
    let dist = bootstrap_aurocs(samples, n_boot, seed)?;
    if dist.is_empty() {
        return Ok((point, point));
    }
    let (lo, hi) = percentile_interval(&dist, level);
    Ok((lo.min(point), hi.max(point)))
}

/// One-tailed paired bootstrap z-test of AUROC(A) > AUROC(B): z is the mean
/// over the standard deviation of resampled differences and p = 1 - Φ(z).
pub fn auroc_z_test(a: &[ScoredSample], b: &[ScoredSample], n_boot: usize, seed: u64) -> Result<f64, EvalError> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.participant_id != y.participant_id || x.day != y.day || x.label != y.label) {
        return Err(EvalError::Mismatch("both score sets must cover the same samples in the same order".into()));
    }
    let groups = by_participant(a);
    check_participants(a, &groups)?;
    let diffs: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .filter_map(|k| {
            let draw = resample(groups.len(), seed, k);
            Some(resample_auroc(a, &groups, &draw)? - resample_auroc(b, &groups, &draw)?)
        })
        .collect();
    if diffs.len() < 2 {
        return Err(EvalError::SingleClass);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Ok(if mean > 0.0 {
            0.0
        } else if mean < 0.0 {
            1.0
        } else {
            0.5
        });
    }
    Ok(1.0 - Normal::standard().cdf(mean / sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cohort(rng: &mut ChaCha8Rng, n: usize, sep: f64) -> Vec<ScoredSample> {
        let mut out = Vec::new();
        for p in 0..n {
            let positive = p % 2 == 0;
            for d in 0..6 {
                let noise: f64 = rng.random_range(-1.0..1.0);
                let score = if positive { sep } else { 0.0 } + noise;
                out.push(ScoredSample { participant_id: format!("p{p:03}"), day: d, score, label: positive, symptom_count: 0 });
            }
        }
        out
    }

    #[test]
    fn perfect_cohort_gives_degenerate_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = cohort(&mut rng, 10, 5.0);
        assert_eq!(bootstrap_ci(&s, 200, 0.95, 3).unwrap(), (1.0, 1.0));
        let w = cohort(&mut rng, 10, 0.5);
        assert_eq!(bootstrap_ci(&w, 200, 0.95, 3).unwrap(), bootstrap_ci(&w, 200, 0.95, 3).unwrap());
    }

    #[test]
    fn raw_interval_usually_covers_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut covered = 0;
        for t in 0..100 {
            let s = cohort(&mut rng, 30, 0.6);
            let scores: Vec<f64> = s.iter().map(|x| x.score).collect();
            let labels: Vec<bool> = s.iter().map(|x| x.label).collect();
            let point = auroc(&scores, &labels).unwrap();
            let (lo, hi) = percentile_interval(&bootstrap_aurocs(&s, 200, t).unwrap(), 0.95);
            if lo <= point && point <= hi {
                covered += 1;
            }
        }
        assert!(covered >= 95, "{covered}");
    }

    #[test]
    fn z_test_null_and_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = cohort(&mut rng, 20, 0.5);
        for seed in 0..5 {
            assert!((auroc_z_test(&s, &s, 300, seed).unwrap() - 0.5).abs() < 0.05);
        }
        let perfect: Vec<ScoredSample> = s.iter().map(|x| ScoredSample { score: f64::from(u8::from(x.label)), ..x.clone() }).collect();
        let random: Vec<ScoredSample> = s.iter().map(|x| ScoredSample { score: rng.random_range(0.0..1.0), ..x.clone() }).collect();
        let p = auroc_z_test(&perfect, &random, 500, 9).unwrap();
        assert!(p < 0.01, "{p}");
        assert_eq!(p, auroc_z_test(&perfect, &random, 500, 9).unwrap());
    }
}
