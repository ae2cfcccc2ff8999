//! Differentiable network: conv embedder, modality fusion, GRU classifier
//! with disease and reversed-language heads, the non-recurrent baselines,
//! Adam and checkpoints.

pub mod adam;
pub mod baseline;
pub mod checkpoint;
pub mod embedder;
pub mod gru;
pub mod heads;
pub mod params;
pub mod sequence;

use std::ops::Range;

pub use adam::AdamState;
pub use baseline::{baseline_input, baseline_score};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use embedder::{embed_recording, fuse_modalities, mean_conv_features, EmbedderWeights};
pub use gru::{gru_step, GruWeights};
pub use heads::{grad_reverse, loss, softmax, LossOutput};
pub use params::{Block, ModelDims, ModelKind, ParamLayout};
pub use sequence::{backward_sequence, forward_sequence, ForwardTrace, SequenceWeights};

use crate::audio::MelPatch;
use crate::scalar::Real;
use embedder::{embed_backward, embed_with_trace, project, project_backward, ClipTrace, EmbedderGrads};
use sequence::SequenceGrads;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("trace does not match parameters: {0}")]
    TraceMismatch(String),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("invalid model dimensions: {0}")]
    InvalidDims(String),
    #[error(transparent)]
    Io(std::io::Error),
}

/// Which embedder parameters receive gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbedderTraining {
    /// Embedder fixed at its (calibrated) initial values.
    #[default]
    Frozen,
    /// Only the dense projection is trained; conv stages are fixed.
    Projection,
    /// Every parameter is trained end to end.
    Joint,
}

impl EmbedderTraining {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbedderTraining::Frozen => "frozen",
            EmbedderTraining::Projection => "projection",
            EmbedderTraining::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [EmbedderTraining::Frozen, EmbedderTraining::Projection, EmbedderTraining::Joint].into_iter().find(|m| m.as_str() == s)
    }
}

/// Input for one day of a window, at one of three levels of preprocessing.
#[derive(Debug, Clone, Copy)]
pub enum StepInput<'a, T> {
    /// Log-mel patches of breath, cough and voice.
    Patches([&'a [MelPatch<T>]; 3]),
    /// Mean flattened conv features of breath, cough and voice.
    Features([&'a [T]; 3]),
    /// Already-fused embedding vector.
    Fused(&'a [T]),
}

#[derive(Debug, Clone, PartialEq)]
enum StepTrace<T> {
    Patches(Box<[ClipTrace<T>; 3]>),
    Features([Vec<T>; 3]),
    Fused,
}

/// Everything a window forward pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTrace<T> {
    steps: Vec<StepTrace<T>>,
    pub fused: Vec<Vec<T>>,
    pub sequence: Option<ForwardTrace<T>>,
    /// Baseline head input and output probability.
    pub baseline: Option<(Vec<T>, T)>,
}

impl<T: Real> WindowTrace<T> {
    /// Per-step disease probabilities (a single value for baselines).
    pub fn probs(&self) -> Vec<T> {
        match (&self.sequence, &self.baseline) {
            (Some(s), _) => s.probs.clone(),
            (None, Some((_, p))) => vec![*p],
            _ => unreachable!(),
        }
    }

    pub fn language_logits(&self) -> Option<&[T]> {
        self.sequence.as_ref().and_then(|s| s.language_logits.as_deref())
    }
}

/// Flat parameter vector plus the metadata needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub dims: ModelDims,
    pub kind: ModelKind,
    pub lambda_rev: f64,
    pub layout: ParamLayout,
    pub params: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn from_parts(dims: ModelDims, kind: ModelKind, lambda_rev: f64, params: Vec<T>) -> Result<Self, ModelError> {
        dims.validate().map_err(ModelError::InvalidDims)?;
        let layout = ParamLayout::new(&dims, kind);
        if params.len() != layout.len() {
            return Err(ModelError::DimensionMismatch { expected: layout.len(), got: params.len() });
        }
        Ok(Self { dims, kind, lambda_rev, layout, params })
    }

    /// Glorot-initialised parameters, deterministic in `seed`.
    pub fn init(dims: ModelDims, kind: ModelKind, lambda_rev: f64, seed: u64) -> Self {
        let layout = ParamLayout::new(&dims, kind);
        let params = layout.init(seed);
        Self { dims, kind, lambda_rev, layout, params }
    }

    pub fn embedder(&self) -> EmbedderWeights<'_, T> {
        EmbedderWeights::from_flat(self.dims, &self.layout, &self.params)
    }

    pub fn sequence(&self) -> SequenceWeights<'_, T> {
        assert_eq!(self.kind, ModelKind::Sequence, "not a sequence model");
        SequenceWeights::from_flat(&self.dims, &self.layout, &self.params)
    }

    /// Copies the embedder block from another model with the same dims.
    pub fn copy_embedder_from(&mut self, other: &ModelParams<T>) {
        assert_eq!(self.dims, other.dims);
        let r = self.layout.embedder_range();
        self.params[r.clone()].copy_from_slice(&other.params[r]);
    }

    pub fn trainable_ranges(&self, mode: EmbedderTraining) -> Vec<Range<usize>> {
        let head = self.layout.embedder_range().end..self.layout.len();
        match mode {
            EmbedderTraining::Frozen => vec![head],
            EmbedderTraining::Projection => vec![self.layout.range(Block::ProjW).start..self.layout.len()],
            EmbedderTraining::Joint => vec![0..self.layout.len()],
        }
    }

    /// Fused vector for one day.
    pub fn fuse(&self, input: &StepInput<'_, T>) -> Vec<T> {
        let w = self.embedder();
        let e = self.dims.embed;
        let mut out = Vec::with_capacity(3 * e);
        match input {
            StepInput::Patches(clips) => clips.iter().for_each(|c| out.extend(embed_recording(c, &w))),
            StepInput::Features(feats) => feats.iter().for_each(|f| out.extend(project(f, &w))),
            StepInput::Fused(x) => {
                assert_eq!(x.len(), 3 * e, "fused vector size");
                out.extend_from_slice(x);
            }
        }
        out
    }

    fn embed_steps(&self, inputs: &[StepInput<'_, T>]) -> (Vec<StepTrace<T>>, Vec<Vec<T>>) {
        let w = self.embedder();
        let mut traces = Vec::with_capacity(inputs.len());
        let mut fused = Vec::with_capacity(inputs.len());
        for input in inputs {
            match input {
                StepInput::Patches(clips) => {
                    let [a, b, c] = clips.map(|cl| embed_with_trace(cl, &w));
                    fused.push([a.0.as_slice(), &b.0, &c.0].concat());
                    traces.push(StepTrace::Patches(Box::new([a.1, b.1, c.1])));
                }
                StepInput::Features(feats) => {
                    fused.push(self.fuse(input));
                    traces.push(StepTrace::Features(feats.map(|f| f.to_vec())));
                }
                StepInput::Fused(_) => {
                    fused.push(self.fuse(input));
                    traces.push(StepTrace::Fused);
                }
            }
        }
        (traces, fused)
    }

    /// Forward pass over a window of days, keeping everything backprop needs.
    pub fn forward_window(&self, inputs: &[StepInput<'_, T>]) -> WindowTrace<T> {
        let (steps, fused) = self.embed_steps(inputs);
        match self.kind {
            ModelKind::Sequence => {
                let seq = forward_sequence(&fused, &self.sequence());
                WindowTrace { steps, fused, sequence: Some(seq), baseline: None }
            }
            kind => {
                let x = baseline_input(kind, &fused);
                let p = baseline_score(&x, &self.layout, &self.params);
                WindowTrace { steps, fused, sequence: None, baseline: Some((x, p)) }
            }
        }
    }

    /// Accumulates parameter gradients into `grads` given dL/dp (one per
    /// step, or a single value for baselines) and dL/d(language logits).
    pub fn backward_window(
        &self,
        trace: &WindowTrace<T>,
        d_probs: &[T],
        d_language_logits: Option<&[T]>,
        grads: &mut [T],
        train_conv: bool,
    ) -> Result<(), ModelError> {
        if grads.len() != self.layout.len() {
            return Err(ModelError::DimensionMismatch { expected: self.layout.len(), got: grads.len() });
        }
        if trace.steps.len() != trace.fused.len() || trace.fused.iter().any(|f| f.len() != self.dims.fused_dim()) {
            return Err(ModelError::TraceMismatch("fused vectors do not match the model".into()));
        }
        let d_fused = match (self.kind, &trace.sequence, &trace.baseline) {
            (ModelKind::Sequence, Some(seq), None) => {
                let mut slices = self.layout.blocks_mut(grads);
                let _ = EmbedderGrads::take(&mut slices);
                let mut g = SequenceGrads::take(&mut slices);
                backward_sequence(seq, d_probs, d_language_logits, T::lit(self.lambda_rev), &self.sequence(), &mut g)?
            }
            (kind, None, Some((x, p))) if kind != ModelKind::Sequence => {
                if d_probs.len() != 1 {
                    return Err(ModelError::TraceMismatch("baselines take one probability gradient".into()));
                }
                baseline::baseline_backward(kind, x, *p, d_probs[0], trace.steps.len(), &self.layout, &self.params, grads)
            }
            _ => return Err(ModelError::TraceMismatch("trace was produced by a different model kind".into())),
        };
        let w = self.embedder();
        let e = self.dims.embed;
        let mut slices = self.layout.blocks_mut(grads);
        let mut eg = EmbedderGrads::take(&mut slices);
        for (st, dx) in trace.steps.iter().zip(&d_fused) {
            match st {
                StepTrace::Patches(clips) => {
                    for (m, ct) in clips.iter().enumerate() {
                        embed_backward(ct, &dx[m * e..(m + 1) * e], &w, &mut eg, train_conv);
                    }
                }
                StepTrace::Features(feats) => {
                    for (m, f) in feats.iter().enumerate() {
                        project_backward(f, &dx[m * e..(m + 1) * e], &mut eg);
                    }
                }
                StepTrace::Fused => {}
            }
        }
        Ok(())
    }

    /// Probabilities and hidden states of the sequence model over fused days.
    pub fn predict_sequence<X: AsRef<[T]>>(&self, fused: &[X]) -> ForwardTrace<T> {
        forward_sequence(fused, &self.sequence())
    }

    /// Baseline score over a window of fused days.
    pub fn predict_baseline<X: AsRef<[T]>>(&self, fused: &[X]) -> T {
        baseline_score(&baseline_input(self.kind, fused), &self.layout, &self.params)
    }

    /// Rescales the projection so that the embeddings of `features` (mean
    /// conv features of sample recordings) have zero mean and unit variance
    /// per dimension. Dimensions with no spread are left unscaled.
    pub fn calibrate_projection(&mut self, features: &[Vec<T>]) {
        if features.is_empty() {
            return;
        }
        let e = self.dims.embed;
        let n = T::from_usize_lossy(features.len());
        let embs: Vec<Vec<T>> = {
            let w = self.embedder();
            features.iter().map(|f| project(f, &w)).collect()
        };
        let flat = self.dims.flat_dim();
        let (wr, br) = (self.layout.range(Block::ProjW), self.layout.range(Block::ProjB));
        for k in 0..e {
            let mean = embs.iter().map(|v| v[k]).sum::<T>() / n;
            let var = embs.iter().map(|v| (v[k] - mean) * (v[k] - mean)).sum::<T>() / n;
            let sd = var.sqrt();
            let scale = if sd > T::lit(1e-12) { T::one() / sd } else { T::one() };
            for v in &mut self.params[wr.start + k * flat..wr.start + (k + 1) * flat] {
                *v *= scale;
            }
            let b = &mut self.params[br.start + k];
            *b = (*b - mean) * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patches(dims: &ModelDims, rng: &mut ChaCha8Rng, n: usize) -> Vec<MelPatch<f64>> {
        (0..n).map(|_| MelPatch { values: (0..dims.patch_frames * dims.n_mels).map(|_| rng.random_range(-1.0..1.0)).collect(), n_mels: dims.n_mels }).collect()
    }

    #[test]
    fn input_levels_agree() {
        let dims = ModelDims::tiny();
        let m = ModelParams::<f64>::init(dims, ModelKind::Sequence, 1.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clips: Vec<Vec<MelPatch<f64>>> = (0..3).map(|_| patches(&dims, &mut rng, 2)).collect();
        let a = m.fuse(&StepInput::Patches([&clips[0], &clips[1], &clips[2]]));
        let feats: Vec<Vec<f64>> = clips.iter().map(|c| mean_conv_features(c, &m.embedder())).collect();
        let b = m.fuse(&StepInput::Features([&feats[0], &feats[1], &feats[2]]));
        let c = m.fuse(&StepInput::Fused(&b));
        for ((x, y), z) in a.iter().zip(&b).zip(&c) {
            assert!((x - y).abs() < 1e-12);
            assert_eq!(y, z);
        }
    }

    #[test]
    fn calibration_standardises_embeddings() {
        let dims = ModelDims::tiny();
        let mut m = ModelParams::<f64>::init(dims, ModelKind::Sequence, 1.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let feats: Vec<Vec<f64>> = (0..30).map(|_| mean_conv_features(&patches(&dims, &mut rng, 1), &m.embedder())).collect();
        m.calibrate_projection(&feats);
        let w = m.embedder();
        let embs: Vec<Vec<f64>> = feats.iter().map(|f| project(f, &w)).collect();
        for k in 0..dims.embed {
            let mean = embs.iter().map(|v| v[k]).sum::<f64>() / 30.0;
            let var = embs.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / 30.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn baseline_trace_rejected_by_sequence_backward() {
        let dims = ModelDims::tiny();
        let seq = ModelParams::<f64>::init(dims, ModelKind::Sequence, 1.0, 3);
        let base = ModelParams::<f64>::init(dims, ModelKind::BaselineAverage, 1.0, 3);
        let x = vec![0.1; dims.fused_dim()];
        let trace = base.forward_window(&[StepInput::Fused(&x), StepInput::Fused(&x)]);
        let mut g = vec![0.0; seq.layout.len()];
        assert!(matches!(seq.backward_window(&trace, &[0.0], None, &mut g, false), Err(ModelError::TraceMismatch(_))));
    }
}
