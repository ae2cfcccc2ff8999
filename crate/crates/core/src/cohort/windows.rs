use super::augment::ClipPerturbation;
use super::types::{Label, Participant, RecordingSample};

/// Samples per training window.
pub const WINDOW_LEN: usize = 5;
/// Largest allowed day gap between consecutive samples in a window.
pub const WINDOW_MAX_GAP: i64 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentationTag {
    None,
    TimeInverse,
    Perturb,
    Oversample,
}

impl AugmentationTag {
    pub fn as_str(self) -> &'static str {
        match self {
            AugmentationTag::None => "none",
            AugmentationTag::TimeInverse => "time_inverse",
            AugmentationTag::Perturb => "perturb",
            AugmentationTag::Oversample => "oversample",
        }
    }
}

/// A window slot: the source recording, its day on the window's own time
/// axis (which differs from `sample.day` after time inversion) and an
/// optional per-modality perturbation recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub sample: RecordingSample,
    pub day: i64,
    pub perturbation: Option<[ClipPerturbation; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    pub participant_id: String,
    pub samples: Vec<WindowSample>,
    pub tag: AugmentationTag,
}

impl SequenceWindow {
    pub fn gaps(&self) -> Vec<i64> {
        self.samples.windows(2).map(|w| w[1].day - w[0].day).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.sample.label).collect()
    }

    /// Exclusive span, last day minus first day.
    pub fn span_days(&self) -> i64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.day - a.day,
            _ => 0,
        }
    }

    /// Majority label over the window; windows have an odd length.
    pub fn majority_positive(&self) -> bool {
        let pos = self.samples.iter().filter(|s| s.sample.label.is_positive()).count();
        2 * pos > self.samples.len()
    }

    pub fn final_label(&self) -> Label {
        self.samples.last().expect("nonempty window").sample.label
    }
}

/// Sliding windows of `len` consecutive samples at the given stride; windows
/// containing a gap above `max_gap` days are discarded.
pub fn generate_windows(participant: &Participant, len: usize, max_gap: i64, stride: usize) -> Vec<SequenceWindow> {
    assert!(len >= 1 && stride >= 1, "len and stride must be positive");
    let s = &participant.samples;
    if s.len() < len {
        return Vec::new();
    }
    (0..=s.len() - len)
        .step_by(stride)
        .filter(|&start| s[start..start + len].windows(2).all(|w| (1..=max_gap).contains(&(w[1].day - w[0].day))))
        .map(|start| SequenceWindow {
            participant_id: participant.id.clone(),
            samples: s[start..start + len]
                .iter()
                .map(|r| WindowSample { sample: r.clone(), day: r.day, perturbation: None })
                .collect(),
            tag: AugmentationTag::None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{AgeBand, Gender, Language};
    use proptest::prelude::*;

    pub(crate) fn participant(days: &[i64]) -> Participant {
        Participant {
            id: "p".into(),
            language: Language::English,
            gender: Gender::Female,
            age_band: AgeBand::Thirties,
            samples: days
                .iter()
                .map(|&d| RecordingSample {
                    participant_id: "p".into(),
                    day: d,
                    breath: "b.wav".into(),
                    cough: "c.wav".into(),
                    voice: "v.wav".into(),
                    label: Label::Negative,
                    symptom_count: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn examples() {
        let w = generate_windows(&participant(&[0, 3, 6, 9, 12]), 5, 14, 1);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].gaps(), vec![3, 3, 3, 3]);
        assert!(generate_windows(&participant(&[0, 3, 6, 21, 24]), 5, 14, 1).is_empty());
        assert_eq!(generate_windows(&participant(&[0, 1, 2, 3, 4, 5, 6, 7, 8]), 5, 14, 1).len(), 5);
        assert_eq!(generate_windows(&participant(&[0, 1, 2, 3, 4, 5, 6, 7, 8]), 5, 14, 2).len(), 3);
        assert!(generate_windows(&participant(&[0, 1, 2]), 5, 14, 1).is_empty());
    }

    proptest! {
        #[test]
        fn windows_have_five_samples_and_bounded_gaps(gaps in proptest::collection::vec(1i64..20, 0..25)) {
            let mut days = vec![0i64];
            for g in gaps { let d = days.last().unwrap() + g; days.push(d); }
            let p = participant(&days);
            for w in generate_windows(&p, WINDOW_LEN, WINDOW_MAX_GAP, 1) {
                prop_assert_eq!(w.samples.len(), 5);
                prop_assert!(w.gaps().iter().all(|g| (1..=14).contains(g)));
                prop_assert!(w.span_days() <= 56);
                prop_assert!(w.samples.iter().all(|s| s.sample.participant_id == p.id));
            }
        }
    }
}
