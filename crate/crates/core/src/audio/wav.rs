use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError, AudioResult};
use crate::scalar::Real;

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => AudioError::Io(io),
        hound::Error::IoError(io) => AudioError::MalformedWav(format!("truncated or unreadable data: {io}")),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("format not supported".into()),
        other => AudioError::MalformedWav(other.to_string()),
    }
}

/// Reads a PCM (8/16/24/32-bit) or 32-bit float WAV file, scaling to `[-1, 1]`.
pub fn load_wav<T: Real, P: AsRef<Path>>(path: P) -> AudioResult<AudioClip<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )));
    }
    let reader = WavReader::open(path).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.sample_rate == 0 {
        return Err(AudioError::MalformedWav("zero channels or sample rate".into()));
    }
    let samples: Vec<T> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| T::lit(f64::from(v))))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| T::lit(f64::from(v) * scale)))
                .collect::<Result<_, _>>()
                .map_err(map_hound)?
        }
        (fmt, bits) => return Err(AudioError::UnsupportedEncoding(format!("{fmt:?} with {bits} bits"))),
    };
    if samples.is_empty() {
        return Err(AudioError::MalformedWav("data chunk holds no samples".into()));
    }
    let channels = usize::from(spec.channels);
    if !samples.len().is_multiple_of(channels) {
        return Err(AudioError::MalformedWav("partial frame at end of data".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(AudioError::MalformedWav("non-finite sample".into()));
    }
    Ok(AudioClip::interleaved(samples, channels, spec.sample_rate))
}

/// Writes 16-bit PCM. Samples are clamped to `[-1, 1]` and quantized by
/// rounding, so a load after write differs by at most half a step.
pub fn write_wav<T: Real, P: AsRef<Path>>(path: P, clip: &AudioClip<T>) -> AudioResult<()> {
    let spec = WavSpec {
        channels: clip.channels() as u16,
        sample_rate: clip.rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(map_hound)?;
    for &s in clip.samples() {
        let v = (s.to_f64_lossy().clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0);
        w.write_sample(v as i16).map_err(map_hound)?;
    }
    w.finalize().map_err(map_hound)
}

pub fn write_wav_float<T: Real, P: AsRef<Path>>(path: P, clip: &AudioClip<T>) -> AudioResult<()> {
    let spec = WavSpec {
        channels: clip.channels() as u16,
        sample_rate: clip.rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(map_hound)?;
    for &s in clip.samples() {
        w.write_sample(s.to_f64_lossy() as f32).map_err(map_hound)?;
    }
    w.finalize().map_err(map_hound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_raw_pcm16(path: &Path, samples: &[i16]) {
        let spec = WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn pcm16_is_scaled_by_2_pow_15() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw_pcm16(&p, &[16384, -8192]);
        let clip: AudioClip<f64> = load_wav(&p).unwrap();
        assert!((clip.samples()[0] - 0.5).abs() < 1e-4);
        assert!((clip.samples()[1] + 0.25).abs() < 1e-4);
        assert_eq!(clip.rate(), 16000);
    }

    #[test]
    fn empty_data_chunk_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.wav");
        write_raw_pcm16(&p, &[]);
        assert!(matches!(load_wav::<f64, _>(&p), Err(AudioError::MalformedWav(_))));
    }

    #[test]
    fn truncated_and_garbage_files_are_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_raw_pcm16(&p, &[1, 2, 3, 4, 5, 6, 7, 8]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_wav::<f64, _>(&p), Err(AudioError::MalformedWav(_))));
        std::fs::write(&p, b"not a riff file at all").unwrap();
        assert!(matches!(load_wav::<f64, _>(&p), Err(AudioError::MalformedWav(_))));
    }

    #[test]
    fn eight_bit_and_float_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let clip = AudioClip::interleaved(vec![0.25f64, -0.5, 0.75, 1.0], 2, 8000);
        write_wav_float(&p, &clip).unwrap();
        let back: AudioClip<f64> = load_wav(&p).unwrap();
        assert_eq!(back, clip);

        let p8 = dir.path().join("u8.wav");
        let spec = WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 8, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(&p8, spec).unwrap();
        w.write_sample(64i8).unwrap();
        w.write_sample(-128i8).unwrap();
        w.finalize().unwrap();
        let c: AudioClip<f64> = load_wav(&p8).unwrap();
        assert_eq!(c.samples(), &[0.5, -1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn write_then_load_is_within_half_a_quantization_step(
            data in proptest::collection::vec(-1.0f64..1.0, 1..400),
            stereo in any::<bool>(),
        ) {
            let mut data = data;
            let channels = if stereo { 2 } else { 1 };
            if data.len() % channels != 0 { data.pop(); }
            prop_assume!(!data.is_empty());
            let clip = AudioClip::interleaved(data, channels, 22050);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.wav");
            write_wav(&p, &clip).unwrap();
            let back: AudioClip<f64> = load_wav(&p).unwrap();
            prop_assert_eq!(back.channels(), channels);
            prop_assert_eq!(back.len(), clip.len());
            for (a, b) in clip.samples().iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
            }
        }
    }
}
