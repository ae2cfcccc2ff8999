//! Non-recurrent benchmarks: a logistic head on the final day's fused vector
//! ("single") or on the mean fused vector of the window ("average").

use super::params::{Block, ModelKind, ParamLayout};
use crate::scalar::{dot, sigmoid, Real};

/// Head input for a baseline: last vector or elementwise mean.
pub fn baseline_input<T: Real, X: AsRef<[T]>>(kind: ModelKind, fused: &[X]) -> Vec<T> {
    assert!(!fused.is_empty());
    match kind {
        ModelKind::BaselineSingle => fused.last().unwrap().as_ref().to_vec(),
        ModelKind::BaselineAverage => {
            let mut m = vec![T::zero(); fused[0].as_ref().len()];
            for x in fused {
                m.iter_mut().zip(x.as_ref()).for_each(|(a, &v)| *a += v);
            }
            let inv = T::one() / T::from_usize_lossy(fused.len());
            m.iter_mut().for_each(|a| *a *= inv);
            m
        }
        ModelKind::Sequence => panic!("not a baseline model"),
    }
}

pub fn baseline_score<T: Real>(x: &[T], layout: &ParamLayout, p: &[T]) -> T {
    sigmoid(dot(&p[layout.range(Block::HeadW)], x) + p[layout.range(Block::HeadB)][0])
}

/// Gradients of the head given dL/dp; returns dL/d(each window vector).
pub fn baseline_backward<T: Real>(kind: ModelKind, x: &[T], p_out: T, d_p: T, n_steps: usize, layout: &ParamLayout, p: &[T], grads: &mut [T]) -> Vec<Vec<T>> {
    let d_logit = d_p * p_out * (T::one() - p_out);
    let hw = layout.range(Block::HeadW);
    for (g, &xv) in grads[hw.clone()].iter_mut().zip(x) {
        *g += d_logit * xv;
    }
    grads[layout.range(Block::HeadB)][0] += d_logit;
    let d_x: Vec<T> = p[hw].iter().map(|&w| d_logit * w).collect();
    match kind {
        ModelKind::BaselineSingle => {
            let mut out = vec![vec![T::zero(); x.len()]; n_steps];
            out[n_steps - 1] = d_x;
            out
        }
        _ => {
            let inv = T::one() / T::from_usize_lossy(n_steps);
            vec![d_x.iter().map(|&v| v * inv).collect(); n_steps]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelDims;

    #[test]
    fn identical_days_make_single_equal_average() {
        let dims = ModelDims::tiny();
        let v: Vec<f64> = (0..dims.fused_dim()).map(|i| (i as f64).sin()).collect();
        let w = vec![v.clone(); 5];
        let (s, a) = (baseline_input(ModelKind::BaselineSingle, &w), baseline_input(ModelKind::BaselineAverage, &w));
        assert!(s.iter().zip(&a).all(|(x, y)| (x - y).abs() <= 1e-15));
        let layout = ParamLayout::new(&dims, ModelKind::BaselineSingle);
        let p = vec![0.0; layout.len()];
        assert_eq!(baseline_score(&vec![0.0; dims.fused_dim()], &layout, &p), 0.5);
    }
}
