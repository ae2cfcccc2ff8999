//! Output heads, gradient reversal and the training loss.

use crate::scalar::Real;

/// Probability clamp used inside the log terms of the loss.
pub const PROB_CLAMP: f64 = 1e-12;

/// Identity in the forward direction.
pub fn grad_reverse_forward<T: Copy>(v: &[T]) -> Vec<T> {
    v.to_vec()
}

/// Backward of the reversal layer: multiplies the upstream gradient by `-lambda`.
pub fn grad_reverse<T: Real>(upstream: &[T], lambda: T) -> Vec<T> {
    assert!(lambda >= T::zero(), "reversal coefficient must be non-negative");
    upstream.iter().map(|&g| -(lambda * g)).collect()
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Binary cross-entropy with the probability clamped to `[c, 1 - c]`.
pub fn bce<T: Real>(p: T, y: T) -> T {
    let c = T::lit(PROB_CLAMP);
    let p = p.max(c).min(T::one() - c);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub total: T,
    pub bce: T,
    pub language_ce: T,
    /// dL/dp_t per step.
    pub d_probs: Vec<T>,
    /// dL/d(language logits), already scaled by the language weight.
    pub d_language_logits: Option<Vec<T>>,
}

/// `mean_t BCE(p_t, y_t) + w_lang * CE(softmax(logits), language)`.
///
/// The language term is skipped when no logits or no label is given.
pub fn loss<T: Real>(probs: &[T], labels: &[bool], language_logits: Option<&[T]>, language: Option<usize>, w_lang: T) -> LossOutput<T> {
    assert_eq!(probs.len(), labels.len(), "one label per step");
    assert!(!probs.is_empty());
    let n = T::from_usize_lossy(probs.len());
    let c = T::lit(PROB_CLAMP);
    let mut total_bce = T::zero();
    let mut d_probs = Vec::with_capacity(probs.len());
    for (&p, &l) in probs.iter().zip(labels) {
        let y = if l { T::one() } else { T::zero() };
        total_bce += bce(p, y);
        let pc = p.max(c).min(T::one() - c);
        d_probs.push((-y / pc + (T::one() - y) / (T::one() - pc)) / n);
    }
    let bce_mean = total_bce / n;
    let (ce, d_lang) = match (language_logits, language) {
        (Some(z), Some(k)) => {
            assert!(k < z.len(), "language index out of range");
            let sm = softmax(z);
            let ce = -sm[k].max(T::min_positive_value()).ln();
            let d: Vec<T> = sm.iter().enumerate().map(|(i, &q)| w_lang * (q - if i == k { T::one() } else { T::zero() })).collect();
            (ce, Some(d))
        }
        _ => (T::zero(), None),
    };
    LossOutput { total: bce_mean + w_lang * ce, bce: bce_mean, language_ce: ce, d_probs, d_language_logits: d_lang }
}
