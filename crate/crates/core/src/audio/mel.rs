use rustfft::{num_complex::Complex, FftPlanner};

use super::{AudioClip, AudioError, AudioResult};
use crate::scalar::Real;

/// Frames per patch fed to the embedder.
pub const PATCH_FRAMES: usize = 96;

#[derive(Debug, Clone, PartialEq)]
pub struct MelParams {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self { window_ms: 25.0, hop_ms: 10.0, n_mels: 64, fmin: 125.0, fmax: 7500.0, log_floor: 1e-6 }
    }
}

impl MelParams {
    pub fn window_samples(&self, rate: u32) -> usize {
        (f64::from(rate) * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (f64::from(rate) * self.hop_ms / 1000.0).round() as usize
    }

    pub fn validate(&self, rate: u32) -> AudioResult<()> {
        let nyquist = f64::from(rate) / 2.0;
        if !(self.window_ms >= self.hop_ms && self.hop_ms > 0.0) {
            return Err(AudioError::InvalidParams("need window_ms >= hop_ms > 0".into()));
        }
        if self.n_mels == 0 {
            return Err(AudioError::InvalidParams("n_mels must be at least 1".into()));
        }
        if !(0.0 <= self.fmin && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(AudioError::InvalidParams(format!("need 0 <= fmin < fmax <= {nyquist}")));
        }
        if self.log_floor <= 0.0 {
            return Err(AudioError::InvalidParams("log_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Log mel energies, `n_frames x n_mels`, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelFrames<T> {
    pub values: Vec<T>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub frame_hop_s: f64,
}

impl<T: Real> LogMelFrames<T> {
    pub fn frame(&self, i: usize) -> &[T] {
        &self.values[i * self.n_mels..(i + 1) * self.n_mels]
    }
}

/// A fixed `PATCH_FRAMES x n_mels` block of log-mel frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MelPatch<T> {
    pub values: Vec<T>,
    pub n_mels: usize,
}

impl<T> MelPatch<T> {
    pub fn n_frames(&self) -> usize {
        self.values.len() / self.n_mels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet<T> {
    pub patches: Vec<MelPatch<T>>,
    /// Set when the input was shorter than one patch and was edge-padded.
    pub padded: bool,
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of the triangular mel filters.
pub fn mel_band_centers(params: &MelParams) -> Vec<f64> {
    let lo = hz_to_mel(params.fmin);
    let hi = hz_to_mel(params.fmax);
    let step = (hi - lo) / (params.n_mels + 1) as f64;
    (1..=params.n_mels).map(|i| mel_to_hz(lo + step * i as f64)).collect()
}

/// Triangular filters evaluated on FFT bin frequencies, `n_mels x n_bins`.
fn filterbank(params: &MelParams, rate: u32, n_fft: usize) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let lo = hz_to_mel(params.fmin);
    let hi = hz_to_mel(params.fmax);
    let step = (hi - lo) / (params.n_mels + 1) as f64;
    let edges: Vec<f64> = (0..params.n_mels + 2).map(|i| mel_to_hz(lo + step * i as f64)).collect();
    let bin_hz = f64::from(rate) / n_fft as f64;
    edges
        .windows(3)
        .map(|e| {
            let (l, c, r) = (e[0], e[1], e[2]);
            let mut w: Vec<f64> = (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0)
                })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                // narrow low band that falls between bins: take the nearest bin
                let k = ((c / bin_hz).round() as usize).min(n_bins - 1);
                w[k] = 1.0;
            }
            w
        })
        .collect()
}

/// Hann-windowed STFT power pooled into mel bands, then `ln(E + floor)`.
///
/// Frames are not padded: `n_frames = floor((N - window) / hop) + 1`.
pub fn log_mel<T: Real>(clip: &AudioClip<T>, params: &MelParams) -> AudioResult<LogMelFrames<T>> {
    if clip.channels() != 1 {
        return Err(AudioError::InvalidParams("log_mel expects a mono clip".into()));
    }
    params.validate(clip.rate())?;
    let win = params.window_samples(clip.rate());
    let hop = params.hop_samples(clip.rate());
    let n = clip.len();
    if n < win || win == 0 {
        return Err(AudioError::TooShort { samples: n, window: win });
    }
    let n_frames = (n - win) / hop + 1;
    let n_fft = win.next_power_of_two();
    let fb = filterbank(params, clip.rate(), n_fft);
    let window: Vec<f64> =
        (0..win).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos()).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let data = clip.samples();
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut power = vec![0.0; n_fft / 2 + 1];
    let mut values = Vec::with_capacity(n_frames * params.n_mels);
    for f in 0..n_frames {
        let start = f * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < win { Complex::new(data[start + i].to_f64_lossy() * window[i], 0.0) } else { Complex::new(0.0, 0.0) };
        }
        fft.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p = b.norm_sqr();
        }
        for filt in &fb {
            let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
            values.push(T::lit((e + params.log_floor).ln()));
        }
    }
    Ok(LogMelFrames { values, n_frames, n_mels: params.n_mels, frame_hop_s: hop as f64 / f64::from(clip.rate()) })
}

/// Splits frames into non-overlapping `PATCH_FRAMES`-frame patches, dropping
/// the remainder. Inputs shorter than one patch are padded by repeating the
/// last frame.
pub fn frame_patches<T: Real>(frames: &LogMelFrames<T>) -> PatchSet<T> {
    let m = frames.n_mels;
    if frames.n_frames < PATCH_FRAMES {
        let mut values = frames.values.clone();
        let last = frames.frame(frames.n_frames - 1).to_vec();
        for _ in frames.n_frames..PATCH_FRAMES {
            values.extend_from_slice(&last);
        }
        return PatchSet { patches: vec![MelPatch { values, n_mels: m }], padded: true };
    }
    let patches = frames
        .values
        .chunks_exact(PATCH_FRAMES * m)
        .map(|c| MelPatch { values: c.to_vec(), n_mels: m })
        .collect();
    PatchSet { patches, padded: false }
}
