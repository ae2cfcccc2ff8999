use std::collections::BTreeSet;

use super::metrics::{pearson, ScoredSample};
use super::EvalError;
use crate::trajectory::{Trajectory, TrajectoryPoint};

/// Symptom counts above this are left out of the symptom fit.
pub const SYMPTOM_EXCLUDE_ABOVE: u32 = 5;
/// Length of the trend window after the anchor day.
pub const TREND_WINDOW_DAYS: i64 = 7;
/// Width of the history-days bins of the sequence-length curve.
pub const HISTORY_DAY_BIN: i64 = 7;

/// Least-squares line of probability against symptom count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
    pub n: usize,
}

pub fn symptom_fit(samples: &[&ScoredSample], exclude_above: u32) -> Result<LineFit, EvalError> {
    let kept: Vec<&&ScoredSample> = samples.iter().filter(|s| s.symptom_count <= exclude_above).collect();
    let x: Vec<f64> = kept.iter().map(|s| f64::from(s.symptom_count)).collect();
    let y: Vec<f64> = kept.iter().map(|s| s.score).collect();
    if x.iter().map(|v| v.to_bits()).collect::<BTreeSet<_>>().len() < 2 {
        return Err(EvalError::ConstantInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(LineFit { slope, intercept: my - slope * mx, r: pearson(&x, &y).unwrap_or(0.0), n: kept.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymptomCorrelation {
    pub ever_positive: Result<LineFit, EvalError>,
    pub never_positive: Result<LineFit, EvalError>,
}

/// Separate symptom fits for participants with and without any positive label.
pub fn symptom_correlation(samples: &[ScoredSample], exclude_above: u32) -> SymptomCorrelation {
    let positive_ids: BTreeSet<&str> = samples.iter().filter(|s| s.label).map(|s| s.participant_id.as_str()).collect();
    let (ever, never): (Vec<&ScoredSample>, Vec<&ScoredSample>) = samples.iter().partition(|s| positive_ids.contains(s.participant_id.as_str()));
    SymptomCorrelation { ever_positive: symptom_fit(&ever, exclude_above), never_positive: symptom_fit(&never, exclude_above) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Increasing,
    NonIncreasing,
}

/// Anchor: first symptomatic day unless a positive test came strictly
/// earlier; with neither, there is no anchor.
pub fn trend_anchor(first_symptom_day: Option<i64>, first_positive_day: Option<i64>) -> Option<i64> {
    match (first_symptom_day, first_positive_day) {
        (Some(s), Some(p)) => Some(s.min(p)),
        (s, p) => s.or(p),
    }
}

/// Sign of the least-squares slope of probability over `[anchor, anchor + 7)`.
pub fn seven_day_trend(points: &[TrajectoryPoint], first_symptom_day: Option<i64>, first_positive_day: Option<i64>) -> Result<Trend, EvalError> {
    let anchor = trend_anchor(first_symptom_day, first_positive_day).ok_or(EvalError::WindowEmpty)?;
    let inside: Vec<&TrajectoryPoint> = points.iter().filter(|p| p.day >= anchor && p.day < anchor + TREND_WINDOW_DAYS).collect();
    if inside.len() < 2 {
        return Err(EvalError::WindowEmpty);
    }
    let x: Vec<f64> = inside.iter().map(|p| p.day as f64).collect();
    let y: Vec<f64> = inside.iter().map(|p| p.probability).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(if sxy > 0.0 { Trend::Increasing } else { Trend::NonIncreasing })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrendTally {
    pub increasing: usize,
    pub non_increasing: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveBin {
    /// Inclusive lower edge: samples, or days for the day curve.
    pub lower: i64,
    /// Points falling in this bin alone.
    pub support: usize,
    /// Accuracy over every point with at least `lower` of history; `None`
    /// if the bin itself is empty.
    pub cumulative_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqLengthCurve {
    pub by_samples: Vec<CurveBin>,
    pub by_days: Vec<CurveBin>,
}

fn curve(points: &[(i64, bool)], lowers: &[i64]) -> Vec<CurveBin> {
    lowers
        .iter()
        .enumerate()
        .map(|(i, &lower)| {
            let upper = lowers.get(i + 1).copied().unwrap_or(i64::MAX);
            let support = points.iter().filter(|(k, _)| *k >= lower && *k < upper).count();
            let tail: Vec<bool> = points.iter().filter(|(k, _)| *k >= lower).map(|p| p.1).collect();
            let acc = tail.iter().filter(|&&c| c).count() as f64 / tail.len().max(1) as f64;
            CurveBin { lower, support, cumulative_accuracy: (support > 0).then_some(acc) }
        })
        .collect()
}

/// Accuracy of the predictions backed by at least a given amount of
/// history, by number of samples and by 7-day bins of history span.
pub fn seq_length_analysis(trajectories: &[Trajectory]) -> SeqLengthCurve {
    let pts: Vec<&TrajectoryPoint> = trajectories.iter().flat_map(|t| t.points.iter()).collect();
    let by_n: Vec<(i64, bool)> = pts.iter().map(|p| (p.history_samples as i64, p.predicted_positive == p.label)).collect();
    let by_d: Vec<(i64, bool)> = pts.iter().map(|p| (p.history_days, p.predicted_positive == p.label)).collect();
    let max_n = by_n.iter().map(|p| p.0).max().unwrap_or(0);
    let max_d = by_d.iter().map(|p| p.0).max().unwrap_or(0);
    let n_edges: Vec<i64> = (1..=max_n).collect();
    let d_edges: Vec<i64> = (0..=max_d / HISTORY_DAY_BIN).map(|b| b * HISTORY_DAY_BIN).collect();
    SeqLengthCurve { by_samples: curve(&by_n, &n_edges), by_days: curve(&by_d, &d_edges) }
}

/// Fraction of consecutive present bins whose accuracy does not drop.
pub fn non_decreasing_fraction(bins: &[CurveBin]) -> Option<f64> {
    let v: Vec<f64> = bins.iter().filter_map(|b| b.cumulative_accuracy).collect();
    if v.len() < 2 {
        return None;
    }
    let ok = v.windows(2).filter(|w| w[1] >= w[0]).count();
    Some(ok as f64 / (v.len() - 1) as f64)
}
