//! Bias-corrected Adam optimiser.

use std::ops::Range;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![T::zero(); n_params], v: vec![T::zero(); n_params] }
    }

    /// One step over every parameter.
    pub fn update(&mut self, params: &mut [T], grads: &[T]) {
        let all = 0..params.len();
        self.update_ranges(params, grads, std::slice::from_ref(&all));
    }

    /// One step restricted to `ranges`; other parameters and their moments
    /// are left untouched.
    pub fn update_ranges(&mut self, params: &mut [T], grads: &[T], ranges: &[Range<usize>]) {
        assert_eq!(params.len(), self.m.len(), "optimiser state does not match parameters");
        assert_eq!(grads.len(), params.len());
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let c1 = T::one() / (T::one() - b1.powi(t));
        let c2 = T::one() / (T::one() - b2.powi(t));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        for r in ranges {
            for i in r.clone() {
                let g = grads[i];
                let m = b1 * self.m[i] + one_b1 * g;
                let v = b2 * self.v[i] + one_b2 * g * g;
                self.m[i] = m;
                self.v[i] = v;
                params[i] -= lr * (m * c1) / ((v * c2).sqrt() + eps);
            }
        }
    }
}
