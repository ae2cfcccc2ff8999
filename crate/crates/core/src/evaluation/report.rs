use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::bootstrap::{auroc_z_test, bootstrap_ci};
use super::dtw::{dtw_align, DtwAlignment};
use super::metrics::{auroc, participant_accuracy, point_biserial, progression_score, progression_summary, sens_spec, ProgressionScore, ScoredSample};
use super::pca::PcaResult;
use super::stats::{seq_length_analysis, seven_day_trend, symptom_correlation, SeqLengthCurve, SymptomCorrelation, Trend, TrendTally, SYMPTOM_EXCLUDE_ABOVE};
use super::EvalError;
use crate::trajectory::{Trajectory, THRESHOLD};

pub fn scored_samples(trajectories: &[Trajectory]) -> Vec<ScoredSample> {
    trajectories
        .iter()
        .flat_map(|t| {
            t.points.iter().map(|p| ScoredSample {
                participant_id: t.participant_id.clone(),
                day: p.day,
                score: p.probability,
                label: p.label,
                symptom_count: p.symptom_count,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMetrics {
    pub name: String,
    pub auroc: f64,
    pub ci: (f64, f64),
    pub sensitivity: f64,
    pub specificity: f64,
    pub n_samples: usize,
    pub n_participants: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ReportConfig {
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { n_boot: 1000, level: 0.95, seed: 7 }
    }
}

pub fn detection_metrics(name: &str, samples: &[ScoredSample], cfg: &ReportConfig) -> Result<DetectionMetrics, EvalError> {
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let a = auroc(&scores, &labels)?;
    let (sensitivity, specificity) = sens_spec(&scores, &labels, THRESHOLD)?;
    let ci = bootstrap_ci(samples, cfg.n_boot, cfg.level, cfg.seed)?;
    let mut ids: Vec<&str> = samples.iter().map(|s| s.participant_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(DetectionMetrics { name: name.into(), auroc: a, ci, sensitivity, specificity, n_samples: samples.len(), n_participants: ids.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantScore {
    pub participant_id: String,
    pub score: ProgressionScore,
    pub accuracy: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryScore {
    pub participant_id: String,
    pub unaligned: f64,
    pub aligned: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZTest {
    pub better: String,
    pub worse: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub detection: Vec<DetectionMetrics>,
    pub z_tests: Vec<ZTest>,
    pub participants: Vec<ParticipantScore>,
    pub progression_mean: Option<f64>,
    pub recovery: Vec<RecoveryScore>,
    pub trend: TrendTally,
    pub symptoms: SymptomCorrelation,
    pub seq_length: SeqLengthCurve,
    pub skipped_days: usize,
}

/// Positive first, negative last.
pub fn is_recovery(t: &Trajectory) -> bool {
    matches!((t.points.first(), t.points.last()), (Some(a), Some(b)) if a.label && !b.label)
}

/// Assembles every analysis from the sequential trajectories and the
/// baselines' trajectories over the same days.
pub fn build_report(sequential: &[Trajectory], baselines: &[(&str, &[Trajectory])], cfg: &ReportConfig) -> Result<MetricReport, EvalError> {
    let seq = scored_samples(sequential);
    let mut detection = vec![detection_metrics("sequential", &seq, cfg)?];
    let mut z_tests = Vec::new();
    for (name, trajs) in baselines {
        let b = scored_samples(trajs);
        detection.push(detection_metrics(name, &b, cfg)?);
        z_tests.push(ZTest { better: "sequential".into(), worse: name.to_string(), p_value: auroc_z_test(&seq, &b, cfg.n_boot, cfg.seed)? });
    }
    let mut participants = Vec::new();
    let mut recovery = Vec::new();
    let mut trend = TrendTally::default();
    for t in sequential.iter().filter(|t| !t.points.is_empty()) {
        let (p, l) = (t.probabilities(), t.labels());
        participants.push(ParticipantScore {
            participant_id: t.participant_id.clone(),
            score: progression_score(&p, &l)?,
            accuracy: participant_accuracy(&p, &l, THRESHOLD)?,
            n_points: p.len(),
        });
        if is_recovery(t) && p.len() >= 2 {
            recovery.push(RecoveryScore {
                participant_id: t.participant_id.clone(),
                unaligned: point_biserial(&p, &l).unwrap_or(0.0),
                aligned: dtw_align(&p, &l)?.aligned_gamma_pb,
            });
        }
        let first_symptom = t.points.iter().find(|q| q.symptom_count > 0).map(|q| q.day);
        let first_positive = t.points.iter().find(|q| q.label).map(|q| q.day);
        match seven_day_trend(&t.points, first_symptom, first_positive) {
            Ok(Trend::Increasing) => trend.increasing += 1,
            Ok(Trend::NonIncreasing) => trend.non_increasing += 1,
            Err(_) => trend.skipped += 1,
        }
    }
    let scores: Vec<ProgressionScore> = participants.iter().map(|p| p.score).collect();
    Ok(MetricReport {
        detection,
        z_tests,
        progression_mean: progression_summary(&scores),
        participants,
        recovery,
        trend,
        symptoms: symptom_correlation(&seq, SYMPTOM_EXCLUDE_ABOVE),
        seq_length: seq_length_analysis(sequential),
        skipped_days: sequential.iter().map(|t| t.skipped_days.len()).sum(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl MetricReport {
    pub fn mean_recovery(&self) -> Option<(f64, f64)> {
        if self.recovery.is_empty() {
            return None;
        }
        let n = self.recovery.len() as f64;
        let un = self.recovery.iter().map(|r| r.unaligned).sum::<f64>() / n;
        let al = self.recovery.iter().map(|r| r.aligned.unwrap_or(r.unaligned)).sum::<f64>() / n;
        Some((un, al))
    }

    /// Writes metrics.csv, participants.csv, recovery.csv, seq_length.csv and summary.txt.
    pub fn write(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("metrics.csv"))?;
        writeln!(f, "section,name,metric,value")?;
        for d in &self.detection {
            for (k, v) in [
                ("auroc", d.auroc),
                ("auroc_ci_low", d.ci.0),
                ("auroc_ci_high", d.ci.1),
                ("sensitivity", d.sensitivity),
                ("specificity", d.specificity),
                ("n_samples", d.n_samples as f64),
                ("n_participants", d.n_participants as f64),
            ] {
                writeln!(f, "detection,{},{k},{v:.6}", d.name)?;
            }
        }
        for z in &self.z_tests {
            writeln!(f, "z_test,{}>{},p_value,{:.6}", z.better, z.worse, z.p_value)?;
        }
        writeln!(f, "progression,cohort,mean_gamma,{}", opt(self.progression_mean))?;
        let (un, al) = self.mean_recovery().map_or((None, None), |(a, b)| (Some(a), Some(b)));
        writeln!(f, "recovery,cohort,mean_gamma_pb,{}", opt(un))?;
        writeln!(f, "recovery,cohort,mean_gamma_pb_dtw,{}", opt(al))?;
        writeln!(f, "trend,cohort,increasing,{}", self.trend.increasing)?;
        writeln!(f, "trend,cohort,non_increasing,{}", self.trend.non_increasing)?;
        writeln!(f, "trend,cohort,skipped,{}", self.trend.skipped)?;
        for (name, fit) in [("ever_positive", &self.symptoms.ever_positive), ("never_positive", &self.symptoms.never_positive)] {
            let fit = fit.as_ref().ok();
            writeln!(f, "symptoms,{name},slope,{}", opt(fit.map(|x| x.slope)))?;
            writeln!(f, "symptoms,{name},r,{}", opt(fit.map(|x| x.r)))?;
        }
        writeln!(f, "trajectory,cohort,skipped_days,{}", self.skipped_days)?;

        let mut f = fs::File::create(dir.join("participants.csv"))?;
        writeln!(f, "participant_id,score_kind,score,accuracy,n_points")?;
        for p in &self.participants {
            writeln!(f, "{},{},{:.6},{:.6},{}", p.participant_id, p.score.kind(), p.score.value(), p.accuracy, p.n_points)?;
        }
        let mut f = fs::File::create(dir.join("recovery.csv"))?;
        writeln!(f, "participant_id,gamma_pb,gamma_pb_dtw")?;
        for r in &self.recovery {
            writeln!(f, "{},{:.6},{}", r.participant_id, r.unaligned, opt(r.aligned))?;
        }
        let mut f = fs::File::create(dir.join("seq_length.csv"))?;
        writeln!(f, "axis,lower,support,cumulative_accuracy")?;
        for (axis, bins) in [("samples", &self.seq_length.by_samples), ("days", &self.seq_length.by_days)] {
            for b in bins {
                writeln!(f, "{axis},{},{},{}", b.lower, b.support, opt(b.cumulative_accuracy))?;
            }
        }
        fs::write(dir.join("summary.txt"), self.to_string())
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Detection")?;
        for d in &self.detection {
            writeln!(
                f,
                "  {:<12} AUROC {:.3} ({:.3}-{:.3})  sensitivity {:.3}  specificity {:.3}  [{} samples, {} participants]",
                d.name, d.auroc, d.ci.0, d.ci.1, d.sensitivity, d.specificity, d.n_samples, d.n_participants
            )?;
        }
        for z in &self.z_tests {
            writeln!(f, "  one-tailed z test {} > {}: p = {:.4}", z.better, z.worse, z.p_value)?;
        }
        writeln!(f, "Progression")?;
        let n_pb = self.participants.iter().filter(|p| matches!(p.score, ProgressionScore::PointBiserial(_))).count();
        writeln!(f, "  mean of gamma_pb/gamma over {} participants ({} with transitions): {}", self.participants.len(), n_pb, opt(self.progression_mean))?;
        match self.mean_recovery() {
            Some((un, al)) => writeln!(f, "  recovery trajectories: {} participants, gamma_pb {:.3}, after DTW {:.3}", self.recovery.len(), un, al)?,
            None => writeln!(f, "  recovery trajectories: none")?,
        }
        writeln!(
            f,
            "  7-day trend after onset: {} increasing, {} non-increasing, {} without a usable window",
            self.trend.increasing, self.trend.non_increasing, self.trend.skipped
        )?;
        writeln!(f, "Symptoms (counts above {SYMPTOM_EXCLUDE_ABOVE} excluded)")?;
        for (name, fit) in [("ever positive", &self.symptoms.ever_positive), ("never positive", &self.symptoms.never_positive)] {
            match fit {
                Ok(x) => writeln!(f, "  {name:<15} slope {:.4}  r {:.3}  n {}", x.slope, x.r, x.n)?,
                Err(e) => writeln!(f, "  {name:<15} not available ({e})")?,
            }
        }
        writeln!(f, "Accuracy by history length (predictions with at least this much history)")?;
        let mut line = String::new();
        for b in &self.seq_length.by_samples {
            if let Some(a) = b.cumulative_accuracy {
                let _ = write!(line, " >={}:{:.3}", b.lower, a);
            }
        }
        writeln!(f, "  samples{line}")?;
        let mut line = String::new();
        for b in &self.seq_length.by_days {
            if let Some(a) = b.cumulative_accuracy {
                let _ = write!(line, " >={}d:{:.3}", b.lower, a);
            }
        }
        writeln!(f, "  days   {line}")?;
        if self.skipped_days > 0 {
            writeln!(f, "{} days had no earlier recording inside the lookback and were not scored", self.skipped_days)?;
        }
        Ok(())
    }
}

/// Alignment paths of several trajectories in one long-format CSV.
pub fn write_dtw_csv(path: impl AsRef<Path>, rows: &[(&str, &[f64], &[bool], &DtwAlignment)]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "participant_id,step,pred_index,label_index,probability,label")?;
    for (id, probs, labels, a) in rows {
        for (k, &(i, j)) in a.path.iter().enumerate() {
            writeln!(f, "{id},{k},{i},{j},{:.6},{}", probs[i], u8::from(labels[j]))?;
        }
    }
    f.flush()
}

/// One row per projected vector: id, day, then the components.
pub fn write_pca_csv(path: impl AsRef<Path>, keys: &[(String, i64)], pca: &PcaResult) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    let k = pca.components.len();
    let header: Vec<String> = (1..=k).map(|c| format!("pc{c}")).collect();
    writeln!(f, "participant_id,day,{}", header.join(","))?;
    for ((id, day), row) in keys.iter().zip(&pca.projections) {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(f, "{id},{day},{}", vals.join(","))?;
    }
    f.flush()
}
