//! Severity-controlled voice, cough and breath synthesis.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::AudioClip;
use crate::scalar::Real;

pub const SYNTH_RATE: u32 = 16_000;
pub const CLIP_SECONDS: f64 = 2.0;
const N_HARMONICS: usize = 8;

fn n_samples() -> usize {
    (CLIP_SECONDS * f64::from(SYNTH_RATE)).round() as usize
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// One-pole low-pass `y[n] = a y[n-1] + (1-a) x[n]`.
fn lowpass(x: &[f64], a: f64) -> Vec<f64> {
    let mut y = 0.0;
    x.iter()
        .map(|&v| {
            y = a * y + (1.0 - a) * v;
            y
        })
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn finish<T: Real>(x: Vec<f64>, peak: f64) -> AudioClip<T> {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let g = if m > 0.0 { peak / m } else { 0.0 };
    AudioClip::mono(x.into_iter().map(|v| T::lit(v * g)).collect(), SYNTH_RATE)
}

/// Slowly varying unit-variance noise, linearly interpolated from 100 Hz
/// control points.
fn smooth_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let step = (SYNTH_RATE / 100) as usize;
    let ctrl = gaussian(rng, n / step + 2);
    (0..n)
        .map(|i| {
            let k = i / step;
            let f = (i % step) as f64 / step as f64;
            ctrl[k] * (1.0 - f) + ctrl[k + 1] * f
        })
        .collect()
}

fn ramp(i: usize, n: usize, len: usize) -> f64 {
    let edge = i.min(n - 1 - i);
    if edge >= len {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / len as f64).cos()
    }
}

/// Sustained vowel: eight harmonics of `f0` with frequency jitter and
/// broadband noise that both grow with severity `s`.
pub fn synth_voice_f0<T: Real>(s: f64, f0: f64, seed: u64) -> AudioClip<T> {
    let s = s.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_samples();
    let jitter = 0.04 * s;
    let wobble = smooth_noise(&mut rng, n);
    let mut phase = 0.0;
    let mut x = vec![0.0; n];
    let dt = 1.0 / f64::from(SYNTH_RATE);
    for (i, v) in x.iter_mut().enumerate() {
        phase += 2.0 * PI * f0 * (1.0 + jitter * wobble[i]) * dt;
        *v = (1..=N_HARMONICS).map(|k| (k as f64 * phase).sin() / k as f64).sum();
    }
    let harmonic_rms = rms(&x);
    let noise_level = harmonic_rms * (0.003 + 1.2 * s);
    let noise = gaussian(&mut rng, n);
    let fade = (0.03 * f64::from(SYNTH_RATE)) as usize;
    for (i, v) in x.iter_mut().enumerate() {
        *v = (*v + noise_level * noise[i]) * ramp(i, n, fade);
    }
    finish(x, 0.5)
}

/// Voice clip with a seed-derived fundamental in 120-220 Hz.
pub fn synth_voice<T: Real>(s: f64, seed: u64) -> AudioClip<T> {
    let f0 = ChaCha8Rng::seed_from_u64(seed ^ 0xf0f0).random_range(120.0..220.0);
    synth_voice_f0(s, f0, seed)
}

/// Burst centres of the three coughs, in seconds.
pub const COUGH_TIMES: [f64; 3] = [0.25, 0.9, 1.55];

/// Three noise bursts; burst length and low-pass darkening grow with `s`.
pub fn synth_cough<T: Real>(s: f64, seed: u64) -> AudioClip<T> {
    let s = s.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_samples();
    let rate = f64::from(SYNTH_RATE);
    let noise = lowpass(&gaussian(&mut rng, n), 0.1 + 0.7 * s);
    let dur = 0.12 + 0.12 * s;
    let mut x: Vec<f64> = gaussian(&mut rng, n).into_iter().map(|v| 1e-5 * v).collect();
    for &c in &COUGH_TIMES {
        let amp = rng.random_range(0.9..1.0);
        let start = ((c - 0.02) * rate) as usize;
        let len = (dur * rate) as usize;
        let attack = (0.01 * rate) as usize;
        for j in 0..len {
            let env = if j < attack { j as f64 / attack as f64 } else { (-3.0 * (j - attack) as f64 / (len - attack) as f64).exp() };
            x[start + j] += amp * env * noise[start + j];
        }
    }
    finish(x, 0.6)
}

/// Four amplitude-modulated noise cycles; cycle-length irregularity and
/// low-pass darkening grow with `s`.
pub fn synth_breath<T: Real>(s: f64, seed: u64) -> AudioClip<T> {
    let s = s.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_samples();
    let raw: Vec<f64> = (0..4).map(|_| 1.0 + 0.35 * s * rng.random_range(-1.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let lens: Vec<usize> = raw.iter().map(|r| (r / total * n as f64) as usize).collect();
    let noise = lowpass(&gaussian(&mut rng, n), 0.3 + 0.5 * s);
    let mut x = vec![0.0; n];
    let mut pos = 0;
    for len in lens {
        for j in 0..len {
            let e = (PI * j as f64 / len as f64).sin();
            x[pos + j] = e * e * noise[pos + j];
        }
        pos += len;
    }
    finish(x, 0.3)
}
