//! GRU sequence classifier over fused per-day vectors, with per-step disease
//! head and a language head behind a gradient-reversal layer.

use super::gru::{gru_step_backward, gru_step_traced, GruGrads, GruStepTrace, GruWeights};
use super::heads::grad_reverse;
use super::params::{Block, BlockSlices, ModelDims, ParamLayout};
use super::ModelError;
use crate::scalar::{add_outer, add_transpose_mul, affine, dot, sigmoid, Real};

#[derive(Debug, Clone, Copy)]
pub struct SequenceWeights<'a, T> {
    pub gru: GruWeights<'a, T>,
    pub disease_w: &'a [T],
    pub disease_b: T,
    pub language: Option<(&'a [T], &'a [T])>,
}

impl<'a, T: Real> SequenceWeights<'a, T> {
    pub fn from_flat(dims: &ModelDims, layout: &ParamLayout, p: &'a [T]) -> Self {
        let language = layout.has(Block::LangW).then(|| (&p[layout.range(Block::LangW)], &p[layout.range(Block::LangB)]));
        Self {
            gru: GruWeights::from_flat(dims.fused_dim(), dims.hidden, layout, p),
            disease_w: &p[layout.range(Block::DiseaseW)],
            disease_b: p[layout.range(Block::DiseaseB)][0],
            language,
        }
    }
}

pub struct SequenceGrads<'a, T> {
    pub gru: GruGrads<'a, T>,
    pub disease_w: &'a mut [T],
    pub disease_b: &'a mut [T],
    pub language: Option<(&'a mut [T], &'a mut [T])>,
}

impl<'a, T> SequenceGrads<'a, T> {
    pub fn take(slices: &mut BlockSlices<'a, T>) -> Self {
        let gru = GruGrads::take(slices);
        let disease_w = slices.take(Block::DiseaseW);
        let disease_b = slices.take(Block::DiseaseB);
        let language = slices.try_take(Block::LangW).map(|w| (w, slices.take(Block::LangB)));
        Self { gru, disease_w, disease_b, language }
    }
}

/// Per-step activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub steps: Vec<GruStepTrace<T>>,
    pub probs: Vec<T>,
    pub language_logits: Option<Vec<T>>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_hidden(&self) -> &[T] {
        &self.steps.last().expect("non-empty trace").h
    }

    /// Re-runs the forward pass from the inputs stored in the trace.
    pub fn replay(&self, w: &SequenceWeights<'_, T>) -> ForwardTrace<T> {
        let xs: Vec<&[T]> = self.steps.iter().map(|s| s.x.as_slice()).collect();
        forward_sequence(&xs, w)
    }
}

/// Runs the GRU over `xs` (any length ≥ 1) from a zero initial state.
pub fn forward_sequence<T: Real, X: AsRef<[T]>>(xs: &[X], w: &SequenceWeights<'_, T>) -> ForwardTrace<T> {
    assert!(!xs.is_empty(), "sequence must contain at least one step");
    let mut h = vec![T::zero(); w.gru.hidden];
    let mut steps = Vec::with_capacity(xs.len());
    let mut probs = Vec::with_capacity(xs.len());
    for x in xs {
        let t = gru_step_traced(x.as_ref(), &h, &w.gru);
        probs.push(sigmoid(dot(w.disease_w, &t.h) + w.disease_b));
        h.clone_from(&t.h);
        steps.push(t);
    }
    let language_logits = w.language.map(|(lw, lb)| {
        let mut z = vec![T::zero(); lb.len()];
        affine(lw, &h, lb, &mut z);
        z
    });
    ForwardTrace { steps, probs, language_logits }
}

/// Backpropagates loss gradients w.r.t. the step probabilities and the
/// language logits. Returns the gradient w.r.t. each step input.
pub fn backward_sequence<T: Real>(
    trace: &ForwardTrace<T>,
    d_probs: &[T],
    d_language_logits: Option<&[T]>,
    lambda_rev: T,
    w: &SequenceWeights<'_, T>,
    g: &mut SequenceGrads<'_, T>,
) -> Result<Vec<Vec<T>>, ModelError> {
    let n = w.gru.hidden;
    if trace.is_empty() || d_probs.len() != trace.len() {
        return Err(ModelError::TraceMismatch(format!("{} probability gradients for {} steps", d_probs.len(), trace.len())));
    }
    if trace.steps.iter().any(|s| s.h.len() != n || s.x.len() != w.gru.input) {
        return Err(ModelError::TraceMismatch("trace shapes differ from the parameters".into()));
    }
    if trace.language_logits.is_some() != w.language.is_some() || d_language_logits.is_some() && w.language.is_none() {
        return Err(ModelError::TraceMismatch("language head presence differs".into()));
    }
    let mut d_h = vec![T::zero(); n];
    if let (Some(dz), Some((lw, _)), Some((gw, gb))) = (d_language_logits, w.language, g.language.as_mut()) {
        let h_last = trace.final_hidden();
        add_outer(dz, h_last, gw);
        gb.iter_mut().zip(dz).for_each(|(b, d)| *b += *d);
        let mut d_feat = vec![T::zero(); n];
        add_transpose_mul(lw, dz, &mut d_feat);
        for (a, r) in d_h.iter_mut().zip(grad_reverse(&d_feat, lambda_rev)) {
            *a += r;
        }
    }
    let mut d_xs = vec![Vec::new(); trace.len()];
    for t in (0..trace.len()).rev() {
        let st = &trace.steps[t];
        let p = trace.probs[t];
        let d_logit = d_probs[t] * p * (T::one() - p);
        if d_logit != T::zero() {
            add_outer(&[d_logit], &st.h, g.disease_w);
            g.disease_b[0] += d_logit;
            for (a, &wv) in d_h.iter_mut().zip(w.disease_w) {
                *a += d_logit * wv;
            }
        }
        let (dx, dh_prev) = gru_step_backward(st, &d_h, &w.gru, &mut g.gru);
        d_xs[t] = dx;
        d_h = dh_prev;
    }
    Ok(d_xs)
}
