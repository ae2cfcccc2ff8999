use super::{AudioClip, AudioError, AudioResult};
use crate::scalar::Real;

/// Working sample rate of the whole pipeline.
pub const TARGET_RATE: u32 = 16_000;
/// Leading/trailing frames quieter than this (dBFS RMS) are trimmed.
pub const SILENCE_THRESHOLD_DB: f64 = -40.0;
pub const TRIM_FRAME_MS: f64 = 10.0;
/// Magnitude at or above which a sample counts as clipped.
pub const CLIP_LEVEL: f64 = 1.0 - 1e-6;

const KAISER_BETA: f64 = 8.0;
/// Sinc zero crossings on each side of the kernel centre.
const KERNEL_ZERO_CROSSINGS: f64 = 32.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;

const MIN_DURATION_S: f64 = 0.5;
const MIN_RMS_DB: f64 = -45.0;
const MAX_CLIPPED_FRACTION: f64 = 0.01;

/// Averages all channels into one.
pub fn to_mono<T: Real>(clip: &AudioClip<T>) -> AudioClip<T> {
    let ch = clip.channels();
    if ch == 1 {
        return clip.clone();
    }
    let inv = T::one() / T::from_usize_lossy(ch);
    let samples = clip.samples().chunks_exact(ch).map(|frame| frame.iter().copied().sum::<T>() * inv).collect();
    AudioClip::mono(samples, clip.rate())
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
///
/// Output length is `round(len * target / rate)`. A clip already at the
/// target rate is returned unchanged.
pub fn resample<T: Real>(clip: &AudioClip<T>, target_rate: u32) -> AudioClip<T> {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.rate() == target_rate {
        return clip.clone();
    }
    let in_rate = f64::from(clip.rate());
    let out_rate = f64::from(target_rate);
    let n_in = clip.len();
    let n_out = ((n_in as f64) * out_rate / in_rate).round().max(1.0) as usize;
    // cutoff in units of the input Nyquist frequency
    let fc = ROLLOFF * (out_rate / in_rate).min(1.0);
    let half_width = KERNEL_ZERO_CROSSINGS / fc;
    let i0_beta = bessel_i0(KAISER_BETA);
    let step = in_rate / out_rate;
    let ch = clip.channels();
    let data = clip.samples();
    let mut out = vec![T::zero(); n_out * ch];
    let mut weights: Vec<(usize, T)> = Vec::with_capacity(2 * half_width.ceil() as usize + 2);
    for n in 0..n_out {
        let t = n as f64 * step;
        let lo = (t - half_width).ceil().max(0.0) as usize;
        let hi = ((t + half_width).floor() as usize).min(n_in.saturating_sub(1));
        weights.clear();
        for k in lo..=hi {
            let d = t - k as f64;
            let x = d / half_width;
            if x.abs() > 1.0 {
                continue;
            }
            let win = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta;
            weights.push((k, T::lit(fc * sinc(fc * d) * win)));
        }
        for c in 0..ch {
            let mut acc = T::zero();
            for &(k, w) in &weights {
                acc += w * data[k * ch + c];
            }
            out[n * ch + c] = acc;
        }
    }
    AudioClip::interleaved(out, ch, target_rate)
}

fn rms<T: Real>(x: &[T]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let e: f64 = x.iter().map(|&v| v.to_f64_lossy().powi(2)).sum();
    (e / x.len() as f64).sqrt()
}

/// RMS level in dB relative to full scale; `-inf` for silence.
pub fn rms_dbfs<T: Real>(x: &[T]) -> f64 {
    20.0 * rms(x).log10()
}

/// Drops leading and trailing `frame_ms` frames whose RMS is below
/// `threshold_db`. The interior of the clip is never touched.
pub fn trim_silence<T: Real>(clip: &AudioClip<T>, threshold_db: f64, frame_ms: f64) -> AudioResult<AudioClip<T>> {
    if clip.channels() != 1 {
        return Err(AudioError::InvalidParams("trim_silence expects a mono clip".into()));
    }
    let frame = ((f64::from(clip.rate()) * frame_ms / 1000.0).round() as usize).max(1);
    let data = clip.samples();
    let loud: Vec<bool> = data.chunks(frame).map(|f| rms_dbfs(f) >= threshold_db).collect();
    let first = loud.iter().position(|&l| l).ok_or(AudioError::EmptyAfterTrim)?;
    let last = loud.iter().rposition(|&l| l).expect("a loud frame exists");
    let start = first * frame;
    let end = ((last + 1) * frame).min(data.len());
    Ok(AudioClip::mono(data[start..end].to_vec(), clip.rate()))
}

/// Scales the clip so its largest magnitude is exactly 1.
pub fn normalize_peak<T: Real>(clip: &AudioClip<T>) -> AudioResult<AudioClip<T>> {
    let peak = clip.peak();
    if peak == T::zero() {
        return Err(AudioError::DegenerateSignal);
    }
    // dividing (rather than multiplying by 1/peak) makes the peak sample exactly 1
    Ok(clip.map(|x| x / peak))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QualityVerdict {
    Ok,
    TooShort,
    TooQuiet,
    Clipped,
}

impl QualityVerdict {
    pub fn is_ok(self) -> bool {
        self == QualityVerdict::Ok
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QualityVerdict::Ok => "ok",
            QualityVerdict::TooShort => "too_short",
            QualityVerdict::TooQuiet => "too_quiet",
            QualityVerdict::Clipped => "clipped",
        }
    }
}

/// Heuristic recording-quality screen: at least 0.5 s long, RMS of at least
/// -45 dBFS and fewer than 1% of samples at full scale.
pub fn quality_check<T: Real>(clip: &AudioClip<T>) -> QualityVerdict {
    if clip.duration_s() < MIN_DURATION_S {
        return QualityVerdict::TooShort;
    }
    if rms_dbfs(clip.samples()) < MIN_RMS_DB {
        return QualityVerdict::TooQuiet;
    }
    let clipped = clip.samples().iter().filter(|&&x| x.to_f64_lossy().abs() >= CLIP_LEVEL).count();
    if clipped as f64 >= MAX_CLIPPED_FRACTION * clip.samples().len() as f64 {
        return QualityVerdict::Clipped;
    }
    QualityVerdict::Ok
}

/// Mono, 16 kHz, silence-trimmed clip; the state in which quality is judged.
/// Peak normalization is applied afterwards by the caller.
pub fn prepare_clip<T: Real>(clip: &AudioClip<T>) -> AudioResult<AudioClip<T>> {
    let mono = to_mono(clip);
    let resampled = resample(&mono, TARGET_RATE);
    trim_silence(&resampled, SILENCE_THRESHOLD_DB, TRIM_FRAME_MS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn tone(freq: f64, amp: f64, rate: u32, secs: f64) -> AudioClip<f64> {
        let n = (f64::from(rate) * secs).round() as usize;
        let w = 2.0 * std::f64::consts::PI * freq / f64::from(rate);
        AudioClip::mono((0..n).map(|i| amp * (w * i as f64).sin()).collect(), rate)
    }

    /// Plain DFT magnitude spectrum of a Hann-windowed signal.
    fn spectrum(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut buf: Vec<Complex<f64>> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
                Complex::new(v * w, 0.0)
            })
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        buf[..n / 2].iter().map(|c| c.norm() * 2.0 / (0.5 * n as f64)).collect()
    }

    #[test]
    fn mono_cases() {
        let m = AudioClip::mono(vec![0.1, 0.2], 8000);
        assert_eq!(to_mono(&m), m);
        let st = AudioClip::interleaved(vec![1.0, 0.0, 1.0, 0.0], 2, 8000);
        assert_eq!(to_mono(&st).samples(), &[0.5, 0.5]);
        let anti = AudioClip::interleaved(vec![0.3, -0.3, -0.7, 0.7], 2, 8000);
        assert!(to_mono(&anti).samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn resample_lengths_and_identity() {
        let c = tone(440.0, 0.5, 32_000, 1.0);
        assert_eq!(resample(&c, 16_000).len(), 16_000);
        let d = tone(440.0, 0.5, 16_000, 1.0);
        assert_eq!(resample(&d, 16_000), d);
    }

    #[test]
    fn resample_keeps_tone_peak_and_amplitude() {
        let c = tone(1000.0, 0.5, 48_000, 1.0);
        let r = resample(&c, 16_000);
        let spec = spectrum(r.samples());
        let (k, &amp) = spec.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
        // 1 s at 16 kHz: 1 Hz bins
        assert!((k as f64 - 1000.0).abs() <= 1.0, "peak bin {k}");
        let ref_amp = spectrum(c.samples())[1000];
        assert!((amp / ref_amp - 1.0).abs() < 0.01, "amplitude {amp} vs {ref_amp}");
    }

    #[test]
    fn resample_round_trip_below_0_4_rate() {
        let rate = 16_000;
        let n = 16_000;
        let freqs = [310.0, 1870.0, 4400.0, 6300.0];
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / f64::from(rate);
                freqs.iter().enumerate().map(|(j, f)| (0.2 / (j + 1) as f64) * (2.0 * std::f64::consts::PI * f * t + j as f64).sin()).sum()
            })
            .collect();
        let clip = AudioClip::mono(x.clone(), rate);
        let back = resample(&resample(&clip, 2 * rate), rate);
        assert_eq!(back.len(), n);
        let err: f64 = x.iter().zip(back.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm < 0.01, "relative L2 error {}", err / norm);
    }

    #[test]
    fn trim_cases() {
        let loud = tone(300.0, 0.5, 16_000, 1.0);
        assert_eq!(trim_silence(&loud, -40.0, 10.0).unwrap(), loud);

        let mut x = vec![0.0; 8000];
        x.extend(tone(300.0, 0.5, 16_000, 1.0).samples());
        x.extend(vec![0.0; 8000]);
        let t = trim_silence(&AudioClip::mono(x, 16_000), -40.0, 10.0).unwrap();
        assert!((t.duration_s() - 1.0).abs() <= 0.010 + 1e-12, "{}", t.duration_s());

        let z = AudioClip::mono(vec![0.0f64; 4000], 16_000);
        assert!(matches!(trim_silence(&z, -40.0, 10.0), Err(AudioError::EmptyAfterTrim)));
    }

    #[test]
    fn normalize_cases() {
        let c = AudioClip::mono(vec![0.5, -0.25], 16_000);
        assert_eq!(normalize_peak(&c).unwrap().samples(), &[1.0, -0.5]);
        let p = AudioClip::mono(vec![1.0, -0.3], 16_000);
        assert_eq!(normalize_peak(&p).unwrap(), p);
        let z = AudioClip::mono(vec![0.0f64; 3], 16_000);
        assert!(matches!(normalize_peak(&z), Err(AudioError::DegenerateSignal)));
    }

    #[test]
    fn quality_cases() {
        let amp = 10f64.powf(-20.0 / 20.0) * 2f64.sqrt();
        assert_eq!(quality_check(&tone(440.0, amp, 16_000, 2.0)), QualityVerdict::Ok);
        assert_eq!(quality_check(&tone(440.0, 0.5, 16_000, 0.2)), QualityVerdict::TooShort);
        let sq: Vec<f64> = (0..16_000).map(|i| if (i / 40) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(quality_check(&AudioClip::mono(sq, 16_000)), QualityVerdict::Clipped);
        assert_eq!(quality_check(&tone(440.0, 0.001, 16_000, 1.0)), QualityVerdict::TooQuiet);
        let n = normalize_peak(&tone(220.0, 0.3, 16_000, 2.0)).unwrap();
        assert_eq!(quality_check(&n), QualityVerdict::Ok);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn normalize_is_idempotent(x in proptest::collection::vec(-3.0f64..3.0, 1..300)) {
            prop_assume!(x.iter().any(|v| *v != 0.0));
            let once = normalize_peak(&AudioClip::mono(x, 16_000)).unwrap();
            let twice = normalize_peak(&once).unwrap();
            prop_assert_eq!(once.peak(), 1.0);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn trim_is_idempotent(
            lead in 0usize..2000, tail in 0usize..2000, body in 200usize..3000,
            level in 0.001f64..1.0, frame_ms in prop_oneof![Just(10.0), Just(25.0)],
        ) {
            let mut x = vec![0.0; lead];
            x.extend((0..body).map(|i| level * ((i as f64) * 0.37).sin() * (1.0 + (i % 7) as f64 / 7.0)));
            x.extend(vec![0.0; tail]);
            let clip = AudioClip::mono(x, 16_000);
            if let Ok(once) = trim_silence(&clip, -40.0, frame_ms) {
                let twice = trim_silence(&once, -40.0, frame_ms).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
