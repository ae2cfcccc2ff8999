use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{Cohort, Participant};
use super::{CohortError, CohortResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s.trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.70, validation: 0.10, test: 0.20 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl DatasetSplit {
    pub fn ids(&self, part: Partition) -> &BTreeSet<String> {
        match part {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    fn ids_mut(&mut self, part: Partition) -> &mut BTreeSet<String> {
        match part {
            Partition::Train => &mut self.train,
            Partition::Validation => &mut self.validation,
            Partition::Test => &mut self.test,
        }
    }

    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        Partition::ALL.into_iter().find(|&p| self.ids(p).contains(id))
    }

    pub fn participants<'a>(&self, cohort: &'a Cohort, part: Partition) -> Vec<&'a Participant> {
        let ids = self.ids(part);
        cohort.participants.iter().filter(|p| ids.contains(&p.id)).collect()
    }

    pub fn insert(&mut self, id: String, part: Partition) {
        self.ids_mut(part).insert(id);
    }
}

/// Two-column CSV: participant_id, partition.
pub fn write_split(path: impl AsRef<std::path::Path>, split: &DatasetSplit) -> CohortResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["participant_id", "partition"])?;
    for part in Partition::ALL {
        for id in split.ids(part) {
            w.write_record([id.as_str(), part.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_split(path: impl AsRef<std::path::Path>) -> CohortResult<DatasetSplit> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut split = DatasetSplit::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |message: String| CohortError::ManifestParse { line, message };
        if rec.len() != 2 {
            return Err(bad("expected participant_id,partition".into()));
        }
        let part = Partition::parse(&rec[1]).ok_or_else(|| bad(format!("unknown partition {:?}", &rec[1])))?;
        if split.partition_of(&rec[0]).is_some() {
            return Err(bad(format!("participant {} listed twice", &rec[0])));
        }
        split.insert(rec[0].to_string(), part);
    }
    Ok(split)
}

/// Per-partition counts for a stratum of `n`: train and validation are
/// rounded, test takes the rest.
fn quotas(n: usize, r: &SplitRatios) -> [usize; 3] {
    let total = r.train + r.validation + r.test;
    let train = ((n as f64) * r.train / total).round() as usize;
    let val = (((n as f64) * r.validation / total).round() as usize).min(n - train.min(n));
    [train.min(n), val, n - train.min(n) - val]
}

/// Participant-level split stratified by ever-positive status.
///
/// Within each label stratum participants are ordered by language and gender
/// (ties broken by a seeded shuffle) and dealt to whichever partition is
/// furthest below its quota, which spreads every language/gender group
/// across the partitions in proportion.
pub fn split_participants(cohort: &Cohort, ratios: SplitRatios, seed: u64) -> CohortResult<DatasetSplit> {
    if cohort.participants.is_empty() {
        return Err(CohortError::InsufficientParticipants("cohort is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit::default();
    for positive in [true, false] {
        let mut stratum: Vec<&Participant> = cohort.participants.iter().filter(|p| p.ever_positive() == positive).collect();
        if stratum.is_empty() {
            continue;
        }
        let q = quotas(stratum.len(), &ratios);
        if q.contains(&0) {
            return Err(CohortError::InsufficientParticipants(format!(
                "{} {} participants cannot fill train/validation/test ({:?})",
                stratum.len(),
                if positive { "ever-positive" } else { "never-positive" },
                q
            )));
        }
        stratum.sort_by(|a, b| a.id.cmp(&b.id));
        stratum.shuffle(&mut rng);
        // stable sort keeps the shuffled order inside each demographic group
        stratum.sort_by_key(|p| (p.language, p.gender));
        let mut filled = [0usize; 3];
        for p in stratum {
            let slot = (0..3)
                .filter(|&k| filled[k] < q[k])
                .max_by(|&a, &b| {
                    let da = (q[a] - filled[a]) as f64 / q[a] as f64;
                    let db = (q[b] - filled[b]) as f64 / q[b] as f64;
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .expect("quota remains while participants remain");
            filled[slot] += 1;
            split.insert(p.id.clone(), Partition::ALL[slot]);
        }
    }
    Ok(split)
}
