use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::types::{AgeBand, Cohort, Gender, Label, Language, Modality, Participant, RecordingSample};
use super::{CohortError, CohortResult};
use crate::audio::{load_wav, prepare_clip, quality_check, AudioError};

/// One manifest line, as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub participant_id: String,
    pub day: String,
    pub breath_path: String,
    pub cough_path: String,
    pub voice_path: String,
    pub label: String,
    pub symptom_count: String,
    pub language: String,
    pub gender: String,
    pub age_band: String,
}

impl ManifestRow {
    pub fn from_sample(p: &Participant, s: &RecordingSample) -> Self {
        Self {
            participant_id: p.id.clone(),
            day: s.day.to_string(),
            breath_path: s.breath.display().to_string(),
            cough_path: s.cough.display().to_string(),
            voice_path: s.voice.display().to_string(),
            label: s.label.to_string(),
            symptom_count: s.symptom_count.to_string(),
            language: p.language.to_string(),
            gender: p.gender.to_string(),
            age_band: p.age_band.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ManifestOptions {
    /// Decode every clip and drop rows failing the quality screen.
    pub check_quality: bool,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        Self { check_quality: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedRow {
    pub line: usize,
    pub participant_id: String,
    pub day: i64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub cohort: Cohort,
    pub dropped: Vec<DroppedRow>,
}

struct Demographics {
    line: usize,
    language: Language,
    gender: Gender,
    age_band: AgeBand,
}

fn parse_err(line: usize, message: impl Into<String>) -> CohortError {
    CohortError::ManifestParse { line, message: message.into() }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn screen(sample: &RecordingSample) -> Option<String> {
    for m in Modality::ALL {
        let verdict = load_wav::<f64, _>(sample.clip_path(*m)).and_then(|clip| prepare_clip(&clip)).map(|c| quality_check(&c));
        match verdict {
            Ok(v) if v.is_ok() => {}
            Ok(v) => return Some(format!("{m}: {}", v.as_str())),
            Err(AudioError::EmptyAfterTrim) => return Some(format!("{m}: too_quiet (silent after trim)")),
            Err(e) => return Some(format!("{m}: {e}")),
        }
    }
    None
}

/// Reads a cohort manifest. Relative clip paths resolve against the
/// manifest's directory; samples come back day-sorted per participant.
pub fn load_manifest(path: impl AsRef<Path>, opts: ManifestOptions) -> CohortResult<LoadedCohort> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut by_participant: BTreeMap<String, (Demographics, Vec<(usize, RecordingSample)>)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut dropped = Vec::new();

    for (i, rec) in rdr.deserialize::<ManifestRow>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if row.participant_id.is_empty() {
            return Err(parse_err(line, "empty participant_id"));
        }
        let day: i64 = row.day.parse().map_err(|_| parse_err(line, format!("bad day {:?}", row.day)))?;
        if day < 0 {
            return Err(parse_err(line, "day must be nonnegative"));
        }
        let label: Label = row.label.parse().map_err(|e: String| parse_err(line, e))?;
        let symptom_count: u32 =
            row.symptom_count.parse().map_err(|_| parse_err(line, format!("bad symptom_count {:?}", row.symptom_count)))?;
        let language: Language = row.language.parse().map_err(|e: String| parse_err(line, e))?;
        let gender: Gender = row.gender.parse().map_err(|e: String| parse_err(line, e))?;
        let age_band: AgeBand = row.age_band.parse().map_err(|e: String| parse_err(line, e))?;

        let sample = RecordingSample {
            participant_id: row.participant_id.clone(),
            day,
            breath: resolve(&base, &row.breath_path),
            cough: resolve(&base, &row.cough_path),
            voice: resolve(&base, &row.voice_path),
            label,
            symptom_count,
        };
        for m in Modality::ALL {
            let p = sample.clip_path(*m);
            if !p.exists() {
                return Err(CohortError::MissingAudio { line, path: p.display().to_string() });
            }
        }

        let entry = by_participant.entry(row.participant_id.clone()).or_insert_with(|| {
            order.push(row.participant_id.clone());
            (Demographics { line, language, gender, age_band }, Vec::new())
        });
        let demo = &entry.0;
        if (demo.language, demo.gender, demo.age_band) != (language, gender, age_band) {
            return Err(parse_err(
                line,
                format!("demographics of {} disagree with line {}", row.participant_id, demo.line),
            ));
        }
        entry.1.push((line, sample));
    }

    let mut participants = Vec::with_capacity(order.len());
    for id in order {
        let (demo, mut rows) = by_participant.remove(&id).expect("participant recorded");
        rows.sort_by_key(|(_, s)| s.day);
        if let Some(w) = rows.windows(2).find(|w| w[0].1.day == w[1].1.day) {
            return Err(parse_err(w[1].0, format!("duplicate day {} for participant {id}", w[1].1.day)));
        }
        let mut samples = Vec::with_capacity(rows.len());
        for (line, s) in rows {
            if opts.check_quality {
                if let Some(reason) = screen(&s) {
                    warn!("dropping manifest line {line} ({} day {}): {reason}", s.participant_id, s.day);
                    dropped.push(DroppedRow { line, participant_id: s.participant_id.clone(), day: s.day, reason });
                    continue;
                }
            }
            samples.push(s);
        }
        if samples.is_empty() {
            continue;
        }
        participants.push(Participant { id, language: demo.language, gender: demo.gender, age_band: demo.age_band, samples });
    }
    dropped.sort_by_key(|d| d.line);
    Ok(LoadedCohort { cohort: Cohort { participants }, dropped })
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> CohortResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "participant_id", "day", "breath_path", "cough_path", "voice_path", "label", "symptom_count", "language",
            "gender", "age_band",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar report of rows removed by the quality screen.
pub fn write_dropped_log(path: impl AsRef<Path>, dropped: &[DroppedRow]) -> CohortResult<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# rows dropped during manifest load: {}", dropped.len())?;
    for d in dropped {
        writeln!(f, "line {}\t{}\tday {}\t{}", d.line, d.participant_id, d.day, d.reason)?;
    }
    f.flush()?;
    Ok(())
}
