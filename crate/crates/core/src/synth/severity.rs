use std::fmt;
use std::str::FromStr;

use crate::scalar::sigmoid;

/// Trajectory families of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Archetype {
    /// Positive at enrolment, turns negative part-way through.
    Recovering,
    /// Positive for the whole follow-up.
    PersistentPositive,
    /// Never positive.
    Healthy,
    /// Negative at enrolment, turns positive part-way through.
    LateOnset,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [Archetype::Recovering, Archetype::PersistentPositive, Archetype::Healthy, Archetype::LateOnset];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Recovering => "recovering",
            Archetype::PersistentPositive => "persistent_positive",
            Archetype::Healthy => "healthy",
            Archetype::LateOnset => "late_onset",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Archetype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Archetype::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| format!("unknown archetype {s:?}"))
    }
}

/// Smooth disease severity `s(t) = peak * σ(rise (t - onset)) * σ(-decay (t - recovery))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityTrajectory {
    pub archetype: Archetype,
    pub onset: f64,
    pub rise: f64,
    pub peak: f64,
    pub recovery: f64,
    pub decay: f64,
}

impl SeverityTrajectory {
    pub fn at(&self, day: f64) -> f64 {
        let s = self.peak * sigmoid(self.rise * (day - self.onset)) * sigmoid(-self.decay * (day - self.recovery));
        s.clamp(0.0, 1.0)
    }

    /// Test label implied by severity.
    pub fn label_at(&self, day: f64) -> bool {
        self.at(day) >= 0.5
    }
}
