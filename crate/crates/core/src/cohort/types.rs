use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

macro_rules! code_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $code:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn code(self) -> &'static str {
                match self { $($name::$variant => $code),+ }
            }

            pub fn index(self) -> usize {
                Self::ALL.iter().position(|&v| v == self).expect("listed variant")
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($code => Ok($name::$variant),)+
                    other => Err(format!("unknown {} {:?}", stringify!($name), other)),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.code())
            }
        }
    };
}

code_enum!(Label { Positive => "positive", Negative => "negative" });

code_enum!(
    /// The eight recording languages; the index is the auxiliary-task class.
    Language {
        English => "en",
        Italian => "it",
        Spanish => "es",
        Portuguese => "pt",
        German => "de",
        French => "fr",
        Greek => "el",
        Russian => "ru",
    }
);

code_enum!(Gender { Female => "female", Male => "male", Other => "other" });

code_enum!(AgeBand {
    Under20 => "0-19",
    Twenties => "20-29",
    Thirties => "30-39",
    Forties => "40-49",
    Fifties => "50-59",
    Sixties => "60-69",
    Over70 => "70+",
});

code_enum!(
    /// Recording modalities, in fused-vector order.
    Modality { Breath => "breath", Cough => "cough", Voice => "voice" }
);

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// One participant-day: three recordings plus the self-reported state.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingSample {
    pub participant_id: String,
    pub day: i64,
    pub breath: PathBuf,
    pub cough: PathBuf,
    pub voice: PathBuf,
    pub label: Label,
    pub symptom_count: u32,
}

impl RecordingSample {
    pub fn symptoms_reported(&self) -> bool {
        self.symptom_count > 0
    }

    pub fn clip_path(&self, m: Modality) -> &Path {
        match m {
            Modality::Breath => &self.breath,
            Modality::Cough => &self.cough,
            Modality::Voice => &self.voice,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub id: String,
    pub language: Language,
    pub gender: Gender,
    pub age_band: AgeBand,
    /// Strictly increasing in `day`.
    pub samples: Vec<RecordingSample>,
}

impl Participant {
    /// Participants need at least five recording days to contribute windows.
    pub fn is_eligible(&self) -> bool {
        self.samples.len() >= super::WINDOW_LEN
    }

    pub fn ever_positive(&self) -> bool {
        self.samples.iter().any(|s| s.label.is_positive())
    }

    pub fn has_transition(&self) -> bool {
        self.samples.windows(2).any(|w| w[0].label != w[1].label)
    }

    pub fn sample_on(&self, day: i64) -> Option<&RecordingSample> {
        self.samples.binary_search_by_key(&day, |s| s.day).ok().map(|i| &self.samples[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    pub participants: Vec<Participant>,
}

impl Cohort {
    pub fn get(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.id == id)
    }

    pub fn n_samples(&self) -> usize {
        self.participants.iter().map(|p| p.samples.len()).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = &RecordingSample> {
        self.participants.iter().flat_map(|p| p.samples.iter())
    }
}
