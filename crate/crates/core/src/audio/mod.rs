//! Waveform handling: WAV I/O, preprocessing and log-mel features.

mod mel;
mod preprocess;
mod wav;

pub use mel::{frame_patches, log_mel, mel_band_centers, LogMelFrames, MelParams, MelPatch, PatchSet, PATCH_FRAMES};
pub use preprocess::{
    normalize_peak, prepare_clip, quality_check, resample, rms_dbfs, to_mono, trim_silence, QualityVerdict,
    CLIP_LEVEL, SILENCE_THRESHOLD_DB, TARGET_RATE, TRIM_FRAME_MS,
};
pub use wav::{load_wav, write_wav, write_wav_float};

use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no frame above the silence threshold")]
    EmptyAfterTrim,
    #[error("signal is identically zero")]
    DegenerateSignal,
    #[error("clip of {samples} samples is shorter than one {window}-sample analysis window")]
    TooShort { samples: usize, window: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub type AudioResult<T> = Result<T, AudioError>;

/// An interleaved multi-channel waveform with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    samples: Vec<T>,
    channels: usize,
    rate: u32,
}

impl<T: Real> AudioClip<T> {
    pub fn mono(samples: Vec<T>, rate: u32) -> Self {
        Self::interleaved(samples, 1, rate)
    }

    /// Builds a clip from interleaved frames.
    ///
    /// Panics if `channels == 0`, `rate == 0` or the sample count is not a
    /// multiple of the channel count.
    pub fn interleaved(samples: Vec<T>, channels: usize, rate: u32) -> Self {
        assert!(channels > 0, "clip needs at least one channel");
        assert!(rate > 0, "sample rate must be positive");
        assert_eq!(samples.len() % channels, 0, "partial frame in interleaved data");
        Self { samples, channels, rate }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    /// Number of frames (samples per channel).
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / f64::from(self.rate)
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn channel(&self, c: usize) -> Vec<T> {
        self.samples.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { samples: self.samples.iter().map(|&x| f(x)).collect(), channels: self.channels, rate: self.rate }
    }

    pub fn cast<U: Real>(&self) -> AudioClip<U> {
        AudioClip {
            samples: self.samples.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
            channels: self.channels,
            rate: self.rate,
        }
    }
}
