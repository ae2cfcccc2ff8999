//! Recording-to-feature pipeline: WAV -> prepared clip -> log-mel patches ->
//! embeddings, plus per-sample caches used by training and inference.

use std::borrow::Cow;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::audio::{frame_patches, load_wav, log_mel, normalize_peak, prepare_clip, AudioClip, AudioError, MelParams, MelPatch};
use crate::audio::write_wav_float;
use crate::cohort::{apply_perturbation, ClipPerturbation, Cohort, ManifestRow, Modality, RecordingSample};
use crate::model::{mean_conv_features, ModelParams, StepInput};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("{path}: {source}")]
    Audio { path: PathBuf, source: AudioError },
    #[error("no recording for participant {participant_id} on day {day}")]
    MissingSample { participant_id: String, day: i64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Patches of an already loaded clip, after optional perturbation,
/// preprocessing and peak normalisation.
pub fn clip_patches<T: Real>(raw: &AudioClip<T>, perturbation: Option<&ClipPerturbation>, mel: &MelParams) -> Result<Vec<MelPatch<T>>, AudioError> {
    let perturbed;
    let src = match perturbation {
        Some(p) => {
            perturbed = apply_perturbation(raw, p);
            &perturbed
        }
        None => raw,
    };
    let clip = normalize_peak(&prepare_clip(src)?)?;
    Ok(frame_patches(&log_mel(&clip, mel)?).patches)
}

pub fn file_patches<T: Real>(path: &Path, perturbation: Option<&ClipPerturbation>, mel: &MelParams) -> Result<Vec<MelPatch<T>>, FeatureError> {
    let wrap = |source| FeatureError::Audio { path: path.to_path_buf(), source };
    let raw = load_wav::<T, _>(path).map_err(wrap)?;
    clip_patches(&raw, perturbation, mel).map_err(wrap)
}

/// Breath, cough and voice patches of one participant-day.
pub fn sample_patches<T: Real>(
    sample: &RecordingSample,
    perturbation: Option<&[ClipPerturbation; 3]>,
    mel: &MelParams,
) -> Result<[Vec<MelPatch<T>>; 3], FeatureError> {
    let mut out: [Vec<MelPatch<T>>; 3] = Default::default();
    for (k, m) in Modality::ALL.iter().enumerate() {
        out[k] = file_patches(sample.clip_path(*m), perturbation.map(|p| &p[k]), mel)?;
    }
    Ok(out)
}

/// Mean conv features (one vector per modality) of one participant-day.
pub fn sample_conv_features<T: Real>(
    sample: &RecordingSample,
    perturbation: Option<&[ClipPerturbation; 3]>,
    mel: &MelParams,
    model: &ModelParams<T>,
) -> Result<[Vec<T>; 3], FeatureError> {
    let patches = sample_patches(sample, perturbation, mel)?;
    let w = model.embedder();
    Ok(patches.map(|p| mean_conv_features(&p, &w)))
}

/// Writes every clip of `cohort` as a mono, 16 kHz, silence-trimmed float
/// WAV under `out_dir/audio` and returns manifest rows pointing at them,
/// relative to `out_dir`.
pub fn write_prepared(cohort: &Cohort, out_dir: &Path) -> Result<Vec<ManifestRow>, FeatureError> {
    std::fs::create_dir_all(out_dir.join("audio"))?;
    let jobs: Vec<(&crate::cohort::Participant, &RecordingSample)> = cohort.participants.iter().flat_map(|p| p.samples.iter().map(move |s| (p, s))).collect();
    jobs.par_iter()
        .map(|(p, s)| {
            let mut row = ManifestRow::from_sample(p, s);
            for m in Modality::ALL {
                let src = s.clip_path(*m);
                let wrap = |source| FeatureError::Audio { path: src.to_path_buf(), source };
                let clip = prepare_clip(&load_wav::<f64, _>(src).map_err(wrap)?).map_err(wrap)?;
                let rel = format!("audio/{}_d{:03}_{m}.wav", s.participant_id, s.day);
                let dst = out_dir.join(&rel);
                write_wav_float(&dst, &clip).map_err(|source| FeatureError::Audio { path: dst.clone(), source })?;
                match m {
                    Modality::Breath => row.breath_path = rel,
                    Modality::Cough => row.cough_path = rel,
                    Modality::Voice => row.voice_path = rel,
                }
            }
            Ok(row)
        })
        .collect()
}

/// Stored per-day model input.
#[derive(Debug, Clone, PartialEq)]
pub enum StepFeatures<T> {
    Patches([Vec<MelPatch<T>>; 3]),
    Features([Vec<T>; 3]),
    Fused(Vec<T>),
}

impl<T: Real> StepFeatures<T> {
    pub fn as_input(&self) -> StepInput<'_, T> {
        match self {
            StepFeatures::Patches([a, b, c]) => StepInput::Patches([a, b, c]),
            StepFeatures::Features([a, b, c]) => StepInput::Features([a, b, c]),
            StepFeatures::Fused(x) => StepInput::Fused(x),
        }
    }
}

/// Anything that can hand out the fused vector of a participant-day.
pub trait FusedSource<T: Real> {
    fn fused(&self, sample: &RecordingSample) -> Result<Cow<'_, [T]>, FeatureError>;
}

/// Computes fused vectors on demand from the audio files.
pub struct OnTheFly<'a, T> {
    pub model: &'a ModelParams<T>,
    pub mel: MelParams,
}

impl<T: Real> FusedSource<T> for OnTheFly<'_, T> {
    fn fused(&self, sample: &RecordingSample) -> Result<Cow<'_, [T]>, FeatureError> {
        let [a, b, c] = sample_patches(sample, None, &self.mel)?;
        Ok(Cow::Owned(self.model.fuse(&StepInput::Patches([&a, &b, &c]))))
    }
}

/// Precomputed fused vectors keyed by (participant, day).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusedCache<T> {
    map: HashMap<(String, i64), Vec<T>>,
}

impl<T: Real> FusedCache<T> {
    /// Fuses every sample of every participant of `cohort` accepted by `keep`.
    pub fn build(model: &ModelParams<T>, cohort: &Cohort, mel: &MelParams, keep: impl Fn(&str) -> bool) -> Result<Self, FeatureError> {
        let samples: Vec<&RecordingSample> = cohort.participants.iter().filter(|p| keep(&p.id)).flat_map(|p| p.samples.iter()).collect();
        let fused: Result<Vec<Vec<T>>, FeatureError> = samples
            .par_iter()
            .map(|s| {
                let [a, b, c] = sample_patches(s, None, mel)?;
                Ok(model.fuse(&StepInput::Patches([&a, &b, &c])))
            })
            .collect();
        let map = samples.iter().map(|s| (s.participant_id.clone(), s.day)).zip(fused?).collect();
        Ok(Self { map })
    }

    pub fn insert(&mut self, participant_id: &str, day: i64, fused: Vec<T>) {
        self.map.insert((participant_id.to_string(), day), fused);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl<T: Real> FusedSource<T> for FusedCache<T> {
    fn fused(&self, sample: &RecordingSample) -> Result<Cow<'_, [T]>, FeatureError> {
        self.map
            .get(&(sample.participant_id.clone(), sample.day))
            .map(|v| Cow::Borrowed(v.as_slice()))
            .ok_or_else(|| FeatureError::MissingSample { participant_id: sample.participant_id.clone(), day: sample.day })
    }
}
