use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::windows::{AugmentationTag, SequenceWindow, WindowSample};
use crate::audio::AudioClip;
use crate::scalar::Real;

/// Gain and additive white noise applied to one clip before preprocessing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipPerturbation {
    pub gain_db: f64,
    /// Signal-to-noise ratio of the added noise; `f64::INFINITY` adds none.
    pub snr_db: f64,
    pub noise_seed: u64,
}

impl ClipPerturbation {
    pub const IDENTITY: ClipPerturbation = ClipPerturbation { gain_db: 0.0, snr_db: f64::INFINITY, noise_seed: 0 };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    pub gain_db_range: (f64, f64),
    pub snr_db: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self { gain_db_range: (-6.0, 6.0), snr_db: 30.0 }
    }
}

pub fn apply_perturbation<T: Real>(clip: &AudioClip<T>, p: &ClipPerturbation) -> AudioClip<T> {
    let gain = T::lit(10f64.powf(p.gain_db / 20.0));
    let mut out = clip.map(|x| x * gain);
    if p.snr_db.is_finite() {
        let n = out.samples().len().max(1) as f64;
        let rms = (out.samples().iter().map(|&x| x.to_f64_lossy().powi(2)).sum::<f64>() / n).sqrt();
        let sigma = rms / 10f64.powf(p.snr_db / 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(p.noise_seed);
        let noisy: Vec<T> = out
            .samples()
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + T::lit(sigma * z)
            })
            .collect();
        out = AudioClip::interleaved(noisy, out.channels(), out.rate());
    }
    out
}

/// Reverses a window in time: samples and labels flip together and the day
/// axis is mirrored so the gap sequence reverses.
pub fn time_inverse_augment(window: &SequenceWindow) -> SequenceWindow {
    let first = window.samples.first().map_or(0, |s| s.day);
    let last = window.samples.last().map_or(0, |s| s.day);
    let samples = window
        .samples
        .iter()
        .rev()
        .map(|s| WindowSample { sample: s.sample.clone(), day: first + last - s.day, perturbation: s.perturbation })
        .collect();
    SequenceWindow { participant_id: window.participant_id.clone(), samples, tag: AugmentationTag::TimeInverse }
}

/// Draws an independent gain and noise realisation for every clip; labels
/// are left alone.
pub fn perturb_augment<R: Rng + ?Sized>(window: &SequenceWindow, cfg: &PerturbConfig, rng: &mut R) -> SequenceWindow {
    let (lo, hi) = cfg.gain_db_range;
    let draw = |rng: &mut R| ClipPerturbation {
        gain_db: if hi > lo { rng.random_range(lo..hi) } else { lo },
        snr_db: cfg.snr_db,
        noise_seed: rng.random(),
    };
    let samples = window
        .samples
        .iter()
        .map(|s| WindowSample { sample: s.sample.clone(), day: s.day, perturbation: Some([draw(rng), draw(rng), draw(rng)]) })
        .collect();
    SequenceWindow { participant_id: window.participant_id.clone(), samples, tag: AugmentationTag::Perturb }
}

fn imbalance(pos: usize, neg: usize) -> f64 {
    let total = pos + neg;
    if total == 0 {
        0.0
    } else {
        pos.abs_diff(neg) as f64 / total as f64
    }
}

/// Appends perturbed replicas of minority-class windows (by majority label)
/// until the two classes are within 5% of the total.
pub fn oversample_balance(windows: &[SequenceWindow], cfg: &PerturbConfig, seed: u64) -> Vec<SequenceWindow> {
    let mut out = windows.to_vec();
    let pos: Vec<usize> = (0..windows.len()).filter(|&i| windows[i].majority_positive()).collect();
    let neg: Vec<usize> = (0..windows.len()).filter(|&i| !windows[i].majority_positive()).collect();
    let (minority, n_maj) = if pos.len() < neg.len() { (pos, neg.len()) } else { (neg, pos.len()) };
    let mut n_min = minority.len();
    if minority.is_empty() || imbalance(n_min, n_maj) <= 0.05 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = minority.clone();
    order.shuffle(&mut rng);
    let mut k = 0;
    while imbalance(n_min, n_maj) > 0.05 {
        let src = &windows[order[k % order.len()]];
        let mut rep = perturb_augment(src, cfg, &mut rng);
        rep.tag = AugmentationTag::Oversample;
        out.push(rep);
        n_min += 1;
        k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{log_mel, normalize_peak, MelParams};
    use crate::cohort::{Label, RecordingSample};
    use proptest::prelude::*;

    fn window(days: &[i64], labels: &[bool]) -> SequenceWindow {
        SequenceWindow {
            participant_id: "p".into(),
            samples: days
                .iter()
                .zip(labels)
                .map(|(&d, &l)| WindowSample {
                    sample: RecordingSample {
                        participant_id: "p".into(),
                        day: d,
                        breath: format!("b{d}.wav").into(),
                        cough: "c.wav".into(),
                        voice: "v.wav".into(),
                        label: Label::from_bool(l),
                        symptom_count: 0,
                    },
                    day: d,
                    perturbation: None,
                })
                .collect(),
            tag: AugmentationTag::None,
        }
    }

    #[test]
    fn time_inverse_examples() {
        let w = window(&[0, 1, 3, 6, 10], &[true, true, false, false, false]);
        let r = time_inverse_augment(&w);
        assert_eq!(r.labels(), vec![Label::Negative, Label::Negative, Label::Negative, Label::Positive, Label::Positive]);
        assert_eq!(w.gaps(), vec![1, 2, 3, 4]);
        assert_eq!(r.gaps(), vec![4, 3, 2, 1]);
        assert_eq!(r.tag, AugmentationTag::TimeInverse);
        let rr = time_inverse_augment(&r);
        assert_eq!(rr.samples, w.samples);
    }

    fn tone_clip(amp: f64) -> AudioClip<f64> {
        let mut x = vec![0.0; 1600];
        x.extend((0..16_000).map(|i| amp * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16_000.0).sin()));
        x.extend(vec![0.0; 1600]);
        AudioClip::mono(x, 16_000)
    }

    #[test]
    fn identity_perturbation_leaves_clip_alone() {
        let c = tone_clip(0.3);
        assert_eq!(apply_perturbation(&c, &ClipPerturbation::IDENTITY), c);
        let w = window(&[0, 1, 2, 3, 4], &[false; 5]);
        let cfg = PerturbConfig { gain_db_range: (0.0, 0.0), snr_db: f64::INFINITY };
        let p = perturb_augment(&w, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(p.labels(), w.labels());
        for s in &p.samples {
            for cp in s.perturbation.unwrap() {
                assert_eq!(apply_perturbation(&c, &cp), c);
            }
        }
    }

    #[test]
    fn gain_is_undone_by_peak_normalization() {
        let c = tone_clip(0.3);
        let g = apply_perturbation(&c, &ClipPerturbation { gain_db: 6.0, snr_db: f64::INFINITY, noise_seed: 0 });
        let p = MelParams::default();
        let a = log_mel(&normalize_peak(&c).unwrap(), &p).unwrap();
        let b = log_mel(&normalize_peak(&g).unwrap(), &p).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn twenty_db_noise_keeps_tone_band_energy() {
        let c = tone_clip(0.5);
        let n = apply_perturbation(&c, &ClipPerturbation { gain_db: 0.0, snr_db: 20.0, noise_seed: 9 });
        let p = MelParams::default();
        let a = log_mel(&c, &p).unwrap();
        let b = log_mel(&n, &p).unwrap();
        // band energy of the tone band summed over the voiced frames
        let band = (0..64).max_by(|&i, &j| a.frame(50)[i].partial_cmp(&a.frame(50)[j]).unwrap()).unwrap();
        let energy = |lm: &crate::audio::LogMelFrames<f64>| -> f64 { (12..95).map(|f| lm.frame(f)[band].exp()).sum() };
        let db = 10.0 * (energy(&b) / energy(&a)).log10();
        assert!(db.abs() < 0.5, "band energy moved {db} dB");
    }

    #[test]
    fn oversampling_examples() {
        let neg = window(&[0, 1, 2, 3, 4], &[false; 5]);
        let pos = window(&[0, 1, 2, 3, 4], &[true; 5]);
        let balanced = vec![neg.clone(), pos.clone()];
        assert_eq!(oversample_balance(&balanced, &PerturbConfig::default(), 3), balanced);

        let mut skewed = vec![neg.clone(); 10];
        skewed.extend(vec![pos.clone(); 2]);
        let out = oversample_balance(&skewed, &PerturbConfig::default(), 3);
        let extra = &out[12..];
        assert!(extra.len() >= 8);
        assert!(extra.iter().all(|w| w.majority_positive() && w.tag == AugmentationTag::Oversample));
        let again = oversample_balance(&skewed, &PerturbConfig::default(), 3);
        assert_eq!(out, again);
    }

    proptest! {
        #[test]
        fn balance_within_five_percent(n_pos in 0usize..30, n_neg in 1usize..30, seed in any::<u64>()) {
            let mut ws = vec![window(&[0, 1, 2, 3, 4], &[true, true, true, false, false]); n_pos];
            ws.extend(vec![window(&[0, 2, 4, 6, 8], &[false, false, true, true, false]); n_neg]);
            let out = oversample_balance(&ws, &PerturbConfig::default(), seed);
            prop_assert_eq!(&out[..ws.len()], &ws[..]);
            for rep in &out[ws.len()..] {
                prop_assert!(rep.labels() == ws[0].labels() || rep.labels() == ws[ws.len() - 1].labels());
            }
            if n_pos > 0 {
                let p = out.iter().filter(|w| w.majority_positive()).count();
                let n = out.len() - p;
                prop_assert!(imbalance(p, n) <= 0.05);
            }
        }

        #[test]
        fn time_inverse_is_an_involution(gaps in proptest::collection::vec(1i64..15, 4), labels in proptest::collection::vec(any::<bool>(), 5)) {
            let mut days = vec![3i64];
            for g in &gaps { let d = days.last().unwrap() + g; days.push(d); }
            let w = window(&days, &labels);
            let r = time_inverse_augment(&w);
            let mut rev_gaps = w.gaps();
            rev_gaps.reverse();
            prop_assert_eq!(r.gaps(), rev_gaps);
            prop_assert_eq!(time_inverse_augment(&r).samples, w.samples);
        }
    }
}
