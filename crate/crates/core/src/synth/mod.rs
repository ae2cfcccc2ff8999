//! Deterministic synthetic longitudinal cohorts with known severity.

mod severity;
mod sounds;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

pub use severity::{Archetype, SeverityTrajectory};
pub use sounds::{synth_breath, synth_cough, synth_voice, synth_voice_f0, CLIP_SECONDS, COUGH_TIMES, SYNTH_RATE};

use crate::audio::{write_wav, AudioError};
use crate::cohort::{write_manifest, AgeBand, CohortError, Gender, Label, Language, ManifestRow};
use crate::config::{ConfigError, KvConfig};
use crate::rng::{derive_seed, stream};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("audio write failed: {0}")]
    Audio(#[from] AudioError),
    #[error("manifest write failed: {0}")]
    Manifest(#[from] CohortError),
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
}

/// Generator settings, readable from a key=value file.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub seed: u64,
    pub recovering: usize,
    pub persistent_positive: usize,
    pub healthy: usize,
    pub late_onset: usize,
    pub min_samples: usize,
    pub max_samples: usize,
    /// Day gaps are drawn uniformly from `gap_min..=gap_max`.
    pub gap_min: i64,
    pub gap_max: i64,
    /// Probability that a gap is instead drawn from 15..=20 days.
    pub gap_violation_rate: f64,
    pub language_weights: Vec<f64>,
    pub gender_weights: Vec<f64>,
    pub age_weights: Vec<f64>,
    /// Spread of the per-participant offset of the acoustic severity.
    pub participant_offset_sd: f64,
    /// Spread of the per-day offset of the acoustic severity.
    pub day_noise_sd: f64,
    /// Recovering participants' acoustics run ahead of their test results
    /// by a lead drawn uniformly from `lead_min..=lead_max` days.
    pub lead_min: f64,
    pub lead_max: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            seed: 2022,
            recovering: 30,
            persistent_positive: 30,
            healthy: 30,
            late_onset: 30,
            min_samples: 8,
            max_samples: 12,
            gap_min: 1,
            gap_max: 5,
            gap_violation_rate: 0.0,
            language_weights: vec![1.0; 8],
            gender_weights: vec![0.48, 0.48, 0.04],
            age_weights: vec![1.0; 7],
            participant_offset_sd: 0.1,
            day_noise_sd: 0.4,
            lead_min: 0.0,
            lead_max: 4.0,
        }
    }
}

impl CohortSpec {
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut kv = KvConfig::parse(text)?;
        let mut s = Self::default();
        kv.take("seed", &mut s.seed)?;
        kv.take("recovering", &mut s.recovering)?;
        kv.take("persistent_positive", &mut s.persistent_positive)?;
        kv.take("healthy", &mut s.healthy)?;
        kv.take("late_onset", &mut s.late_onset)?;
        kv.take("min_samples", &mut s.min_samples)?;
        kv.take("max_samples", &mut s.max_samples)?;
        kv.take("gap_min", &mut s.gap_min)?;
        kv.take("gap_max", &mut s.gap_max)?;
        kv.take("gap_violation_rate", &mut s.gap_violation_rate)?;
        kv.take_list("language_weights", &mut s.language_weights)?;
        kv.take_list("gender_weights", &mut s.gender_weights)?;
        kv.take_list("age_weights", &mut s.age_weights)?;
        kv.take("participant_offset_sd", &mut s.participant_offset_sd)?;
        kv.take("day_noise_sd", &mut s.day_noise_sd)?;
        kv.take("lead_min", &mut s.lead_min)?;
        kv.take("lead_max", &mut s.lead_max)?;
        kv.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.n_participants() == 0 {
            return bad("no participants requested");
        }
        if self.min_samples == 0 || self.min_samples > self.max_samples {
            return bad("need 1 <= min_samples <= max_samples");
        }
        if self.gap_min < 1 || self.gap_min > self.gap_max {
            return bad("need 1 <= gap_min <= gap_max");
        }
        if !(0.0..=1.0).contains(&self.gap_violation_rate) {
            return bad("gap_violation_rate must lie in [0, 1]");
        }
        for (w, n, name) in [(&self.language_weights, 8, "language_weights"), (&self.gender_weights, 3, "gender_weights"), (&self.age_weights, 7, "age_weights")] {
            if w.len() != n || w.iter().any(|&v| !(v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(SynthError::InvalidSpec(format!("{name} needs {n} non-negative weights")));
            }
        }
        if self.participant_offset_sd < 0.0 || self.day_noise_sd < 0.0 || self.lead_min < 0.0 || self.lead_min > self.lead_max {
            return bad("noise spreads and lead range must be non-negative and ordered");
        }
        Ok(())
    }

    pub fn n_participants(&self) -> usize {
        self.recovering + self.persistent_positive + self.healthy + self.late_onset
    }

    fn archetype_list(&self) -> Vec<Archetype> {
        let counts = [self.recovering, self.persistent_positive, self.healthy, self.late_onset];
        Archetype::ALL.iter().zip(counts).flat_map(|(&a, n)| std::iter::repeat_n(a, n)).collect()
    }
}

/// Ground truth of one generated participant-day.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDay {
    pub day: i64,
    pub severity: f64,
    /// Severity that drives the recordings (lead, offsets and noise applied).
    pub acoustic: f64,
    pub label: bool,
    pub symptom_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParticipant {
    pub id: String,
    pub index: usize,
    pub trajectory: SeverityTrajectory,
    pub lead_days: f64,
    pub offset: f64,
    pub f0: f64,
    pub language: Language,
    pub gender: Gender,
    pub age_band: AgeBand,
    pub days: Vec<SynthDay>,
}

impl SynthParticipant {
    pub fn archetype(&self) -> Archetype {
        self.trajectory.archetype
    }
}

fn trajectory_for<R: Rng>(a: Archetype, span: f64, rng: &mut R) -> SeverityTrajectory {
    let rise = rng.random_range(0.3..0.8);
    let decay = rng.random_range(0.25..0.6);
    let peak = rng.random_range(0.88..1.0);
    match a {
        Archetype::Recovering => SeverityTrajectory { archetype: a, onset: -30.0, rise, peak, recovery: span * rng.random_range(0.3..0.65), decay },
        Archetype::PersistentPositive => SeverityTrajectory { archetype: a, onset: -30.0, rise, peak, recovery: span + 60.0, decay },
        Archetype::Healthy => SeverityTrajectory { archetype: a, onset: -1000.0, rise, peak: rng.random_range(0.01..0.07), recovery: 1e4, decay },
        Archetype::LateOnset => SeverityTrajectory { archetype: a, onset: span * rng.random_range(0.3..0.65), rise, peak, recovery: span + 60.0, decay },
    }
}

/// Draws every participant's schedule and ground truth without touching disk.
pub fn plan_cohort(spec: &CohortSpec) -> Result<Vec<SynthParticipant>, SynthError> {
    spec.validate()?;
    let mut archetypes = spec.archetype_list();
    archetypes.shuffle(&mut stream(spec.seed, &[0]));
    let lang_w = WeightedIndex::new(&spec.language_weights).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let gender_w = WeightedIndex::new(&spec.gender_weights).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let age_w = WeightedIndex::new(&spec.age_weights).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let width = spec.n_participants().to_string().len().max(3);
    Ok(archetypes
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut rng = stream(spec.seed, &[1, i as u64]);
            let n = rng.random_range(spec.min_samples..=spec.max_samples);
            let mut days = Vec::with_capacity(n);
            let mut d = rng.random_range(0..=3i64);
            for k in 0..n {
                if k > 0 {
                    d += if rng.random_bool(spec.gap_violation_rate) { rng.random_range(15..=20) } else { rng.random_range(spec.gap_min..=spec.gap_max) };
                }
                days.push(d);
            }
            let (first, last) = (days[0] as f64, days[n - 1] as f64);
            let mut traj = trajectory_for(a, last - first, &mut rng);
            traj.onset += first;
            traj.recovery += first;
            let lead_days = if a == Archetype::Recovering { rng.random_range(spec.lead_min..=spec.lead_max) } else { 0.0 };
            let offset = spec.participant_offset_sd * Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
            let f0 = rng.random_range(120.0..220.0);
            let language = Language::ALL[lang_w.sample(&mut rng)];
            let gender = Gender::ALL[gender_w.sample(&mut rng)];
            let age_band = AgeBand::ALL[age_w.sample(&mut rng)];
            let days = days
                .into_iter()
                .map(|day| {
                    let t = day as f64;
                    let severity = traj.at(t);
                    let noise = spec.day_noise_sd * Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
                    let acoustic = (traj.at(t + lead_days) + offset + noise).clamp(0.0, 1.0);
                    let jitter: i64 = match rng.random_range(0..100) {
                        0..15 => -1,
                        15..85 => 0,
                        _ => 1,
                    };
                    let symptom_count = ((6.0 * severity).round() as i64 + jitter).max(0) as u32;
                    SynthDay { day, severity, acoustic, label: traj.label_at(t), symptom_count }
                })
                .collect();
            SynthParticipant {
                id: format!("P{:0width$}", i + 1),
                index: i,
                trajectory: traj,
                lead_days,
                offset,
                f0,
                language,
                gender,
                age_band,
                days,
            }
        })
        .collect())
}

/// Result of writing a cohort to disk.
#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub participants: Vec<SynthParticipant>,
    pub manifest: PathBuf,
    pub rows: Vec<ManifestRow>,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRUTH_FILE: &str = "ground_truth.csv";
pub const SEVERITY_FILE: &str = "severity.csv";

/// Writes WAV files, `manifest.csv`, `ground_truth.csv` and `severity.csv`
/// under `out_dir`.
pub fn generate_cohort(spec: &CohortSpec, out_dir: impl AsRef<Path>) -> Result<SynthCohort, SynthError> {
    let out = out_dir.as_ref();
    let participants = plan_cohort(spec)?;
    fs::create_dir_all(out.join("audio"))?;
    let rows: Vec<Vec<ManifestRow>> = participants
        .par_iter()
        .map(|p| -> Result<Vec<ManifestRow>, SynthError> {
            let mut rows = Vec::with_capacity(p.days.len());
            for d in &p.days {
                let clip_seed = |m: u64| derive_seed(spec.seed, &[2, p.index as u64, d.day as u64, m]);
                let rel = |m: &str| format!("audio/{}_d{:03}_{m}.wav", p.id, d.day);
                write_wav(out.join(rel("breath")), &synth_breath::<f64>(d.acoustic, clip_seed(0)))?;
                write_wav(out.join(rel("cough")), &synth_cough::<f64>(d.acoustic, clip_seed(1)))?;
                write_wav(out.join(rel("voice")), &synth_voice_f0::<f64>(d.acoustic, p.f0, clip_seed(2)))?;
                rows.push(ManifestRow {
                    participant_id: p.id.clone(),
                    day: d.day.to_string(),
                    breath_path: rel("breath"),
                    cough_path: rel("cough"),
                    voice_path: rel("voice"),
                    label: if d.label { Label::Positive } else { Label::Negative }.to_string(),
                    symptom_count: d.symptom_count.to_string(),
                    language: p.language.to_string(),
                    gender: p.gender.to_string(),
                    age_band: p.age_band.to_string(),
                });
            }
            Ok(rows)
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<ManifestRow> = rows.into_iter().flatten().collect();
    let manifest = out.join(MANIFEST_FILE);
    write_manifest(&manifest, &rows)?;
    write_truth(out, &participants)?;
    Ok(SynthCohort { participants, manifest, rows })
}

fn write_truth(out: &Path, participants: &[SynthParticipant]) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_path(out.join(TRUTH_FILE))?;
    w.write_record(["participant_id", "archetype", "onset", "rise", "peak", "recovery", "decay", "lead_days", "offset", "f0"])?;
    for p in participants {
        let t = &p.trajectory;
        w.write_record([
            p.id.clone(),
            t.archetype.to_string(),
            format!("{:.4}", t.onset),
            format!("{:.4}", t.rise),
            format!("{:.4}", t.peak),
            format!("{:.4}", t.recovery),
            format!("{:.4}", t.decay),
            format!("{:.4}", p.lead_days),
            format!("{:.4}", p.offset),
            format!("{:.3}", p.f0),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join(SEVERITY_FILE))?;
    w.write_record(["participant_id", "day", "severity", "acoustic", "label", "symptom_count"])?;
    for p in participants {
        for d in &p.days {
            w.write_record([
                p.id.clone(),
                d.day.to_string(),
                format!("{:.6}", d.severity),
                format!("{:.6}", d.acoustic),
                u8::from(d.label).to_string(),
                d.symptom_count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `ground_truth.csv` back into (participant id, archetype, lead days).
pub fn read_truth(dir: impl AsRef<Path>) -> Result<Vec<(String, Archetype, f64)>, SynthError> {
    let mut r = csv::Reader::from_path(dir.as_ref().join(TRUTH_FILE))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let arch = rec[1].parse().map_err(SynthError::InvalidSpec)?;
        let lead = rec[7].parse().map_err(|e: std::num::ParseFloatError| SynthError::InvalidSpec(e.to_string()))?;
        out.push((rec[0].to_string(), arch, lead));
    }
    Ok(out)
}
