//! Mini-batch training of the sequential model and the two baselines, with
//! validation-based model selection.

mod config;

use std::borrow::Cow;
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use config::TrainConfig;

use crate::audio::MelParams;
use crate::cohort::{
    generate_windows, oversample_balance, perturb_augment, time_inverse_augment, ClipPerturbation, Cohort, DatasetSplit, Language, Participant,
    Partition, RecordingSample, SequenceWindow, WINDOW_LEN, WINDOW_MAX_GAP,
};
use crate::config::ConfigError;
use crate::evaluation::{auroc, scored_samples};
use crate::features::{sample_conv_features, sample_patches, FeatureError, FusedSource, StepFeatures};
use crate::model::heads::bce;
use crate::model::{loss, AdamState, Checkpoint, EmbedderTraining, ModelDims, ModelError, ModelKind, ModelParams, StepInput};
use crate::rng;
use crate::scalar::Real;
use crate::trajectory::{predict_trajectory, Trajectory, TrajectoryError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{0} partition yields no usable data")]
    EmptyPartition(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

// rng stream ids
const S_INIT: u64 = 1;
const S_SHUFFLE: u64 = 2;
const S_OVERSAMPLE: u64 = 3;
const S_PERTURB: u64 = 4;

/// One training window resolved to feature-store indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub steps: Vec<usize>,
    pub labels: Vec<bool>,
    pub language: usize,
    /// Clean recordings behind `steps`, used for online perturbation;
    /// `None` for replicas that already carry a perturbation.
    pub sources: Option<Vec<RecordingSample>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DataSummary {
    pub train_participants: usize,
    pub validation_participants: usize,
    pub raw_windows: usize,
    pub time_inverse_windows: usize,
    pub oversampled_windows: usize,
}

/// Per-day model inputs for training and validation, with the windows
/// that reference them.
#[derive(Debug, Clone)]
pub struct TrainData<T> {
    pub store: Vec<StepFeatures<T>>,
    index: HashMap<(String, i64), usize>,
    pub items: Vec<TrainItem>,
    pub validation: Vec<Participant>,
    pub summary: DataSummary,
}

impl<T: Real> TrainData<T> {
    /// The same data with every entry reduced to a fused vector under `model`'s embedder.
    pub fn fused_with(&self, model: &ModelParams<T>) -> Self {
        let store = self.store.par_iter().map(|f| StepFeatures::Fused(model.fuse(&f.as_input()))).collect();
        Self { store, index: self.index.clone(), items: self.items.clone(), validation: self.validation.clone(), summary: self.summary }
    }

    fn source<'a>(&'a self, model: &'a ModelParams<T>) -> StoreSource<'a, T> {
        StoreSource { data: self, model }
    }
}

struct StoreSource<'a, T> {
    data: &'a TrainData<T>,
    model: &'a ModelParams<T>,
}

impl<T: Real> FusedSource<T> for StoreSource<'_, T> {
    fn fused(&self, sample: &RecordingSample) -> Result<Cow<'_, [T]>, FeatureError> {
        let i = self
            .data
            .index
            .get(&(sample.participant_id.clone(), sample.day))
            .ok_or_else(|| FeatureError::MissingSample { participant_id: sample.participant_id.clone(), day: sample.day })?;
        Ok(match &self.data.store[*i] {
            StepFeatures::Fused(x) => Cow::Borrowed(x.as_slice()),
            other => Cow::Owned(self.model.fuse(&other.as_input())),
        })
    }
}

fn extract<T: Real>(
    sample: &RecordingSample,
    perturbation: Option<&[ClipPerturbation; 3]>,
    mode: EmbedderTraining,
    model: &ModelParams<T>,
    mel: &MelParams,
) -> Result<StepFeatures<T>, FeatureError> {
    Ok(match mode {
        EmbedderTraining::Frozen => {
            let f = sample_conv_features(sample, perturbation, mel, model)?;
            StepFeatures::Fused(model.fuse(&StepInput::Features([&f[0], &f[1], &f[2]])))
        }
        EmbedderTraining::Projection => StepFeatures::Features(sample_conv_features(sample, perturbation, mel, model)?),
        EmbedderTraining::Joint => StepFeatures::Patches(sample_patches(sample, perturbation, mel)?),
    })
}

/// Fresh sequence model for `cfg`.
pub fn init_model<T: Real>(cfg: &TrainConfig) -> ModelParams<T> {
    let dims = ModelDims {
        embed: cfg.embed_dim,
        hidden: cfg.hidden,
        n_languages: if cfg.language_head { Language::ALL.len() } else { 0 },
        ..ModelDims::default()
    };
    ModelParams::init(dims, ModelKind::Sequence, cfg.lambda_rev, rng::derive_seed(cfg.seed, &[S_INIT, 0]))
}

/// Builds windows from the training participants, applies the offline
/// augmentations, extracts features and calibrates `model`'s projection on
/// the clean training recordings.
pub fn prepare<T: Real>(
    cohort: &Cohort,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    mel: &MelParams,
    model: &mut ModelParams<T>,
) -> Result<TrainData<T>, TrainError> {
    let train = split.participants(cohort, Partition::Train);
    let validation: Vec<Participant> = split.participants(cohort, Partition::Validation).into_iter().filter(|p| p.samples.len() >= 2).cloned().collect();
    let mut windows: Vec<SequenceWindow> = train.iter().flat_map(|p| generate_windows(p, WINDOW_LEN, WINDOW_MAX_GAP, 1)).collect();
    if windows.is_empty() {
        return Err(TrainError::EmptyPartition("train"));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptyPartition("validation"));
    }
    let mut summary = DataSummary {
        train_participants: train.len(),
        validation_participants: validation.len(),
        raw_windows: windows.len(),
        ..DataSummary::default()
    };
    if cfg.time_inverse {
        let inv: Vec<SequenceWindow> = windows.iter().map(time_inverse_augment).collect();
        summary.time_inverse_windows = inv.len();
        windows.extend(inv);
    }
    if cfg.oversample {
        let before = windows.len();
        windows = oversample_balance(&windows, &cfg.perturb_config(), rng::derive_seed(cfg.seed, &[S_OVERSAMPLE]));
        summary.oversampled_windows = windows.len() - before;
    }

    let clean: Vec<&RecordingSample> = train.iter().map(|p| *p).chain(validation.iter()).flat_map(|p| p.samples.iter()).collect();
    let n_train_samples: usize = train.iter().map(|p| p.samples.len()).sum();
    let feats: Vec<[Vec<T>; 3]> = clean.par_iter().map(|s| sample_conv_features(s, None, mel, model)).collect::<Result<_, _>>()?;
    let pooled: Vec<Vec<T>> = feats[..n_train_samples].iter().flat_map(|f| f.iter().cloned()).collect();
    model.calibrate_projection(&pooled);
    drop(pooled);

    let mode = cfg.embedder;
    let mut store: Vec<StepFeatures<T>> = match mode {
        EmbedderTraining::Frozen => feats.into_par_iter().map(|f| StepFeatures::Fused(model.fuse(&StepInput::Features([&f[0], &f[1], &f[2]])))).collect(),
        EmbedderTraining::Projection => feats.into_iter().map(StepFeatures::Features).collect(),
        EmbedderTraining::Joint => {
            drop(feats);
            clean.par_iter().map(|s| sample_patches(s, None, mel).map(StepFeatures::Patches)).collect::<Result<_, _>>()?
        }
    };
    let index: HashMap<(String, i64), usize> = clean.iter().enumerate().map(|(i, s)| ((s.participant_id.clone(), s.day), i)).collect();

    let perturbed: Vec<(&RecordingSample, &[ClipPerturbation; 3])> =
        windows.iter().flat_map(|w| w.samples.iter()).filter_map(|ws| ws.perturbation.as_ref().map(|p| (&ws.sample, p))).collect();
    let extra: Vec<StepFeatures<T>> = perturbed.par_iter().map(|(s, p)| extract(s, Some(*p), mode, model, mel)).collect::<Result<_, _>>()?;
    let mut extra = extra.into_iter();

    let language: HashMap<&str, usize> = train.iter().map(|p| (p.id.as_str(), p.language.index())).collect();
    let mut items = Vec::with_capacity(windows.len());
    for w in &windows {
        let mut steps = Vec::with_capacity(w.samples.len());
        for ws in &w.samples {
            if ws.perturbation.is_some() {
                steps.push(store.len());
                store.push(extra.next().expect("one feature set per perturbed slot"));
            } else {
                steps.push(index[&(ws.sample.participant_id.clone(), ws.sample.day)]);
            }
        }
        let fresh = w.samples.iter().all(|ws| ws.perturbation.is_none());
        items.push(TrainItem {
            steps,
            labels: w.samples.iter().map(|ws| ws.sample.label.is_positive()).collect(),
            language: language[w.participant_id.as_str()],
            sources: fresh.then(|| w.samples.iter().map(|ws| ws.sample.clone()).collect()),
        });
    }
    Ok(TrainData { store, index, items, validation, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_bce: f64,
    /// `None` when the validation labels hold a single class.
    pub val_auroc: Option<f64>,
    pub val_bce: f64,
    /// Best selection score so far (AUROC, or negated BCE without AUROC).
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub kind: ModelKind,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,train_loss,train_bce,val_auroc,val_bce,best_score,is_best")?;
        for e in &self.epochs {
            let auc = e.val_auroc.map_or_else(|| "NA".to_string(), |a| format!("{a:.6}"));
            writeln!(
                f,
                "{},{:.6},{:.6},{},{:.6},{:.6},{}",
                e.epoch,
                e.train_loss,
                e.train_bce,
                auc,
                e.val_bce,
                e.best_score,
                u8::from(e.epoch == self.best_epoch)
            )?;
        }
        f.flush()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    /// Parameters and optimiser state at the best epoch.
    pub checkpoint: Checkpoint<T>,
    pub report: TrainReport,
}

/// Validation trajectories, their AUROC (when defined) and mean BCE.
pub fn validate<T: Real>(model: &ModelParams<T>, data: &TrainData<T>) -> Result<(Vec<Trajectory>, Option<f64>, f64), TrainError> {
    let src = data.source(model);
    let trajs: Vec<Trajectory> = data.validation.iter().map(|p| predict_trajectory(p, model, &src)).collect::<Result<_, _>>()?;
    let samples = scored_samples(&trajs);
    if samples.is_empty() {
        return Err(TrainError::EmptyPartition("validation"));
    }
    let scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let val_bce = samples.iter().map(|s| bce(s.score, if s.label { 1.0 } else { 0.0 })).sum::<f64>() / samples.len() as f64;
    Ok((trajs, auroc(&scores, &labels).ok(), val_bce))
}

fn perturbed_item<T: Real>(item: &TrainItem, key: &[u64], cfg: &TrainConfig, model: &ModelParams<T>, mel: &MelParams) -> Result<Vec<StepFeatures<T>>, FeatureError> {
    let sources = item.sources.as_ref().expect("clean window");
    let w = SequenceWindow {
        participant_id: String::new(),
        samples: sources.iter().map(|s| crate::cohort::WindowSample { sample: s.clone(), day: s.day, perturbation: None }).collect(),
        tag: crate::cohort::AugmentationTag::None,
    };
    let mut r = rng::stream(cfg.seed, key);
    let p = perturb_augment(&w, &cfg.perturb_config(), &mut r);
    p.samples.iter().map(|ws| extract(&ws.sample, ws.perturbation.as_ref(), cfg.embedder, model, mel)).collect()
}

/// Runs the epoch loop for `model` (sequence or baseline) and returns the
/// best-validation checkpoint. `stream` separates the random streams of
/// different models trained under one seed.
pub fn fit<T: Real>(mut model: ModelParams<T>, data: &TrainData<T>, cfg: &TrainConfig, mel: &MelParams, stream: u64) -> Result<FitResult<T>, TrainError> {
    let is_seq = model.kind == ModelKind::Sequence;
    let mode = if is_seq { cfg.embedder } else { EmbedderTraining::Frozen };
    let ranges = model.trainable_ranges(mode);
    let train_conv = mode == EmbedderTraining::Joint;
    let online = cfg.perturb && is_seq;
    let mut adam = AdamState::new(model.params.len(), cfg.lr);
    let w_lang = T::lit(cfg.w_lang);
    let mut grads = vec![T::zero(); model.params.len()];
    let mut order: Vec<usize> = (0..data.items.len()).collect();
    let mut records: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(f64, usize, Checkpoint<T>)> = None;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, &[S_SHUFFLE, stream, epoch as u64]));
        let (mut sum_loss, mut sum_bce) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let fresh: Vec<Option<Vec<StepFeatures<T>>>> = if online {
                batch
                    .par_iter()
                    .map(|&i| {
                        let item = &data.items[i];
                        match item.sources {
                            Some(_) => perturbed_item(item, &[S_PERTURB, epoch as u64, i as u64], cfg, &model, mel).map(Some),
                            None => Ok(None),
                        }
                    })
                    .collect::<Result<_, _>>()?
            } else {
                vec![None; batch.len()]
            };
            grads.iter_mut().for_each(|g| *g = T::zero());
            for (&i, own) in batch.iter().zip(&fresh) {
                let item = &data.items[i];
                let inputs: Vec<StepInput<'_, T>> = match own {
                    Some(f) => f.iter().map(StepFeatures::as_input).collect(),
                    None => item.steps.iter().map(|&s| data.store[s].as_input()).collect(),
                };
                let trace = model.forward_window(&inputs);
                let out = if is_seq {
                    loss(&trace.probs(), &item.labels, trace.language_logits(), Some(item.language), w_lang)
                } else {
                    loss(&trace.probs(), &item.labels[item.labels.len() - 1..], None, None, T::zero())
                };
                model.backward_window(&trace, &out.d_probs, out.d_language_logits.as_deref(), &mut grads, train_conv)?;
                sum_loss += out.total.to_f64_lossy();
                sum_bce += out.bce.to_f64_lossy();
            }
            let inv = T::one() / T::from_usize_lossy(batch.len());
            grads.iter_mut().for_each(|g| *g *= inv);
            adam.update_ranges(&mut model.params, &grads, &ranges);
        }
        let n = data.items.len() as f64;
        let (_, val_auroc, val_bce) = validate(&model, data)?;
        let score = val_auroc.unwrap_or(-val_bce);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, Checkpoint { model: model.clone(), adam: adam.clone() }));
        }
        let (best_score, best_epoch, _) = best.as_ref().expect("set above");
        records.push(EpochRecord { epoch, train_loss: sum_loss / n, train_bce: sum_bce / n, val_auroc, val_bce, best_score: *best_score });
        info!(
            "{:?} epoch {epoch}: loss {:.4} bce {:.4} val auroc {} val bce {:.4}",
            model.kind,
            sum_loss / n,
            sum_bce / n,
            val_auroc.map_or("NA".into(), |a| format!("{a:.4}")),
            val_bce
        );
        if epoch - best_epoch >= cfg.patience {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    let (_, best_epoch, checkpoint) = best.expect("at least one epoch");
    Ok(FitResult { checkpoint, report: TrainReport { kind: model.kind, epochs: records, best_epoch, stopped_early, checkpoint: None } })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub sequence: FitResult<T>,
    pub single: FitResult<T>,
    pub average: FitResult<T>,
    pub summary: DataSummary,
}

/// Trains the sequential model, then both baselines on top of its embedder.
pub fn train<T: Real>(cohort: &Cohort, split: &DatasetSplit, cfg: &TrainConfig, mel: &MelParams) -> Result<TrainOutcome<T>, TrainError> {
    cfg.validate()?;
    let mut model = init_model::<T>(cfg);
    let data = prepare(cohort, split, cfg, mel, &mut model)?;
    info!("training data: {:?}", data.summary);
    let sequence = fit(model, &data, cfg, mel, 0)?;
    let best = &sequence.checkpoint.model;
    let fused = match cfg.embedder {
        EmbedderTraining::Frozen => Cow::Borrowed(&data),
        _ => Cow::Owned(data.fused_with(best)),
    };
    let baseline = |kind: ModelKind, stream: u64| {
        let mut m = ModelParams::init(best.dims, kind, cfg.lambda_rev, rng::derive_seed(cfg.seed, &[S_INIT, stream]));
        m.copy_embedder_from(best);
        fit(m, &fused, cfg, mel, stream)
    };
    let single = baseline(ModelKind::BaselineSingle, 1)?;
    let average = baseline(ModelKind::BaselineAverage, 2)?;
    Ok(TrainOutcome { sequence, single, average, summary: data.summary })
}
