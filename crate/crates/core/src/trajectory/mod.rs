//! Inference-time trajectories: per-day probabilities computed from each
//! participant's own recent history.

use std::io::Write;
use std::path::Path;

use crate::cohort::{Participant, RecordingSample};
use crate::features::{FeatureError, FusedSource};
use crate::model::{ModelKind, ModelParams};
use crate::scalar::Real;

/// Only recordings at most this many days before the current day are used.
pub const LOOKBACK_DAYS: i64 = 56;
/// Decision threshold; a probability equal to it counts as positive.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("participant {participant_id} has no recording on day {day}")]
    NoSample { participant_id: String, day: i64 },
    #[error("no earlier recording within {LOOKBACK_DAYS} days of day {day}")]
    NoHistory { day: i64 },
    #[error("participant {participant_id} has fewer than two recordings")]
    TooFewSamples { participant_id: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub day: i64,
    pub probability: f64,
    pub predicted_positive: bool,
    pub label: bool,
    pub symptom_count: u32,
    /// Recordings fed to the model, current day included.
    pub history_samples: usize,
    /// Current day minus the first day fed to the model.
    pub history_days: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub participant_id: String,
    pub points: Vec<TrajectoryPoint>,
    /// Days without any earlier recording inside the lookback.
    pub skipped_days: Vec<i64>,
}

impl Trajectory {
    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.probability).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.label).collect()
    }
}

pub fn is_positive(probability: f64) -> bool {
    probability >= THRESHOLD
}

/// Recordings used to score `day`: everything in `[day - 56, day]`.
pub fn history<'a>(participant: &'a Participant, day: i64) -> Result<&'a [RecordingSample], TrajectoryError> {
    let s = &participant.samples;
    let end = s.binary_search_by_key(&day, |r| r.day).map_err(|_| TrajectoryError::NoSample { participant_id: participant.id.clone(), day })?;
    let start = s.partition_point(|r| r.day < day - LOOKBACK_DAYS);
    if end == start {
        return Err(TrajectoryError::NoHistory { day });
    }
    Ok(&s[start..=end])
}

fn fused_history<T: Real>(hist: &[RecordingSample], source: &dyn FusedSource<T>) -> Result<Vec<Vec<T>>, TrajectoryError> {
    hist.iter().map(|s| Ok(source.fused(s)?.into_owned())).collect()
}

/// Final-step probability of the sequence model for `day`, or the baseline
/// score over the same history.
pub fn predict_day<T: Real>(participant: &Participant, day: i64, model: &ModelParams<T>, source: &dyn FusedSource<T>) -> Result<f64, TrajectoryError> {
    let hist = history(participant, day)?;
    let fused = fused_history(hist, source)?;
    Ok(score(model, &fused).to_f64_lossy())
}

fn score<T: Real>(model: &ModelParams<T>, fused: &[Vec<T>]) -> T {
    match model.kind {
        ModelKind::Sequence => *model.predict_sequence(fused).probs.last().expect("non-empty history"),
        _ => model.predict_baseline(fused),
    }
}

/// One prediction per recording from the second onwards.
pub fn predict_trajectory<T: Real>(participant: &Participant, model: &ModelParams<T>, source: &dyn FusedSource<T>) -> Result<Trajectory, TrajectoryError> {
    if participant.samples.len() < 2 {
        return Err(TrajectoryError::TooFewSamples { participant_id: participant.id.clone() });
    }
    let mut points = Vec::new();
    let mut skipped_days = Vec::new();
    for s in &participant.samples[1..] {
        match history(participant, s.day) {
            Ok(hist) => {
                let fused = fused_history(hist, source)?;
                let p = score(model, &fused).to_f64_lossy();
                points.push(TrajectoryPoint {
                    day: s.day,
                    probability: p,
                    predicted_positive: is_positive(p),
                    label: s.label.is_positive(),
                    symptom_count: s.symptom_count,
                    history_samples: hist.len(),
                    history_days: s.day - hist[0].day,
                });
            }
            Err(TrajectoryError::NoHistory { day }) => skipped_days.push(day),
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { participant_id: participant.id.clone(), points, skipped_days })
}

/// Final GRU hidden state for each evaluable day.
pub fn extract_latents<T: Real>(participant: &Participant, model: &ModelParams<T>, source: &dyn FusedSource<T>) -> Result<Vec<(i64, Vec<T>)>, TrajectoryError> {
    if participant.samples.len() < 2 {
        return Err(TrajectoryError::TooFewSamples { participant_id: participant.id.clone() });
    }
    let mut out = Vec::new();
    for s in &participant.samples[1..] {
        match history(participant, s.day) {
            Ok(hist) => {
                let fused = fused_history(hist, source)?;
                out.push((s.day, model.predict_sequence(&fused).final_hidden().to_vec()));
            }
            Err(TrajectoryError::NoHistory { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// CSV with columns participant_id, day, probability, predicted_class, label.
pub fn write_trajectories_csv(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "participant_id,day,probability,predicted_class,label")?;
    for t in trajectories {
        for p in &t.points {
            writeln!(f, "{},{},{:.6},{},{}", t.participant_id, p.day, p.probability, u8::from(p.predicted_positive), u8::from(p.label))?;
        }
    }
    f.flush()
}

/// Reads the CSV written by [`write_trajectories_csv`].
pub fn read_trajectories_csv(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("row {}: bad {what}", i + 2);
        if rec.len() != 5 {
            return Err(bad("column count"));
        }
        let day: i64 = rec[1].parse().map_err(|_| bad("day"))?;
        let probability: f64 = rec[2].parse().map_err(|_| bad("probability"))?;
        let label = match &rec[4] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("label")),
        };
        if !(0.0..=1.0).contains(&probability) {
            return Err(bad("probability"));
        }
        let point = TrajectoryPoint {
            day,
            probability,
            predicted_positive: is_positive(probability),
            label,
            symptom_count: 0,
            history_samples: 0,
            history_days: 0,
        };
        match out.last_mut() {
            Some(t) if t.participant_id == rec[0] => t.points.push(point),
            _ => out.push(Trajectory { participant_id: rec[0].to_string(), points: vec![point], skipped_days: vec![] }),
        }
    }
    Ok(out)
}
