//! Single-layer GRU cell with explicit forward trace and backward pass.

use super::params::{Block, BlockSlices, ParamLayout};
use crate::scalar::{add_outer, add_transpose_mul, affine, dot, sigmoid, Real};

#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a, T> {
    pub input: usize,
    pub hidden: usize,
    pub w_z: &'a [T],
    pub u_z: &'a [T],
    pub b_z: &'a [T],
    pub w_r: &'a [T],
    pub u_r: &'a [T],
    pub b_r: &'a [T],
    pub w_h: &'a [T],
    pub u_h: &'a [T],
    pub b_h: &'a [T],
}

impl<'a, T: Real> GruWeights<'a, T> {
    pub fn from_flat(input: usize, hidden: usize, layout: &ParamLayout, p: &'a [T]) -> Self {
        use Block::*;
        Self {
            input,
            hidden,
            w_z: &p[layout.range(GruWz)],
            u_z: &p[layout.range(GruUz)],
            b_z: &p[layout.range(GruBz)],
            w_r: &p[layout.range(GruWr)],
            u_r: &p[layout.range(GruUr)],
            b_r: &p[layout.range(GruBr)],
            w_h: &p[layout.range(GruWh)],
            u_h: &p[layout.range(GruUh)],
            b_h: &p[layout.range(GruBh)],
        }
    }
}

pub struct GruGrads<'a, T> {
    pub w_z: &'a mut [T],
    pub u_z: &'a mut [T],
    pub b_z: &'a mut [T],
    pub w_r: &'a mut [T],
    pub u_r: &'a mut [T],
    pub b_r: &'a mut [T],
    pub w_h: &'a mut [T],
    pub u_h: &'a mut [T],
    pub b_h: &'a mut [T],
}

impl<'a, T> GruGrads<'a, T> {
    pub fn take(slices: &mut BlockSlices<'a, T>) -> Self {
        use Block::*;
        Self {
            w_z: slices.take(GruWz),
            u_z: slices.take(GruUz),
            b_z: slices.take(GruBz),
            w_r: slices.take(GruWr),
            u_r: slices.take(GruUr),
            b_r: slices.take(GruBr),
            w_h: slices.take(GruWh),
            u_h: slices.take(GruUh),
            b_h: slices.take(GruBh),
        }
    }
}

/// Cached activations of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStepTrace<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub rh: Vec<T>,
    pub h_tilde: Vec<T>,
    pub h: Vec<T>,
}

fn gate<T: Real>(w: &[T], u: &[T], b: &[T], x: &[T], h: &[T]) -> Vec<T> {
    let mut a = vec![T::zero(); b.len()];
    affine(w, x, b, &mut a);
    let n = h.len();
    for (r, a) in a.iter_mut().enumerate() {
        *a += dot(&u[r * n..(r + 1) * n], h);
    }
    a
}

pub fn gru_step_traced<T: Real>(x: &[T], h_prev: &[T], w: &GruWeights<'_, T>) -> GruStepTrace<T> {
    assert_eq!(x.len(), w.input, "GRU input size");
    assert_eq!(h_prev.len(), w.hidden, "GRU hidden size");
    let z: Vec<T> = gate(w.w_z, w.u_z, w.b_z, x, h_prev).into_iter().map(sigmoid).collect();
    let r: Vec<T> = gate(w.w_r, w.u_r, w.b_r, x, h_prev).into_iter().map(sigmoid).collect();
    let rh: Vec<T> = r.iter().zip(h_prev).map(|(&r, &h)| r * h).collect();
    let h_tilde: Vec<T> = gate(w.w_h, w.u_h, w.b_h, x, &rh).into_iter().map(T::tanh).collect();
    let h = (0..w.hidden).map(|j| (T::one() - z[j]) * h_prev[j] + z[j] * h_tilde[j]).collect();
    GruStepTrace { x: x.to_vec(), h_prev: h_prev.to_vec(), z, r, rh, h_tilde, h }
}

pub fn gru_step<T: Real>(x: &[T], h_prev: &[T], w: &GruWeights<'_, T>) -> Vec<T> {
    gru_step_traced(x, h_prev, w).h
}

/// Backpropagates `d_h` through one step, accumulating parameter gradients.
/// Returns `(d_x, d_h_prev)`.
pub fn gru_step_backward<T: Real>(t: &GruStepTrace<T>, d_h: &[T], w: &GruWeights<'_, T>, g: &mut GruGrads<'_, T>) -> (Vec<T>, Vec<T>) {
    let n = w.hidden;
    let one = T::one();
    let mut d_x = vec![T::zero(); w.input];
    let mut d_hp: Vec<T> = (0..n).map(|j| d_h[j] * (one - t.z[j])).collect();

    let a_h: Vec<T> = (0..n).map(|j| d_h[j] * t.z[j] * (one - t.h_tilde[j] * t.h_tilde[j])).collect();
    add_outer(&a_h, &t.x, g.w_h);
    add_outer(&a_h, &t.rh, g.u_h);
    g.b_h.iter_mut().zip(&a_h).for_each(|(b, d)| *b += *d);
    add_transpose_mul(w.w_h, &a_h, &mut d_x);
    let mut d_rh = vec![T::zero(); n];
    add_transpose_mul(w.u_h, &a_h, &mut d_rh);

    let a_z: Vec<T> = (0..n).map(|j| d_h[j] * (t.h_tilde[j] - t.h_prev[j]) * t.z[j] * (one - t.z[j])).collect();
    let a_r: Vec<T> = (0..n).map(|j| d_rh[j] * t.h_prev[j] * t.r[j] * (one - t.r[j])).collect();
    for j in 0..n {
        d_hp[j] += d_rh[j] * t.r[j];
    }
    for (a, wx, uh, b) in [(&a_z, &mut *g.w_z, &mut *g.u_z, &mut *g.b_z), (&a_r, &mut *g.w_r, &mut *g.u_r, &mut *g.b_r)] {
        add_outer(a, &t.x, wx);
        add_outer(a, &t.h_prev, uh);
        b.iter_mut().zip(a.iter()).for_each(|(b, d)| *b += *d);
    }
    add_transpose_mul(w.w_z, &a_z, &mut d_x);
    add_transpose_mul(w.u_z, &a_z, &mut d_hp);
    add_transpose_mul(w.w_r, &a_r, &mut d_x);
    add_transpose_mul(w.u_r, &a_r, &mut d_hp);
    (d_x, d_hp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{ModelDims, ModelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zeros(input: usize, hidden: usize) -> Vec<f64> {
        vec![0.0; 3 * (hidden * input + hidden * hidden + hidden)]
    }

    fn view(input: usize, hidden: usize, p: &[f64]) -> GruWeights<'_, f64> {
        let (wi, wh) = (hidden * input, hidden * hidden);
        let blk = wi + wh + hidden;
        let part = |k: usize| -> (&[f64], &[f64], &[f64]) {
            let s = &p[k * blk..(k + 1) * blk];
            (&s[..wi], &s[wi..wi + wh], &s[wi + wh..])
        };
        let (w_z, u_z, b_z) = part(0);
        let (w_r, u_r, b_r) = part(1);
        let (w_h, u_h, b_h) = part(2);
        GruWeights { input, hidden, w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h }
    }

    #[test]
    fn zero_params_halve_previous_state() {
        let p = zeros(3, 2);
        let w = view(3, 2, &p);
        assert_eq!(gru_step(&[1.0, -2.0, 0.5], &[0.4, -0.8], &w), vec![0.2, -0.4]);
        assert_eq!(gru_step(&[1.0, -2.0, 0.5], &[0.0, 0.0], &w), vec![0.0, 0.0]);
    }

    /// Straight transcription of the four cell equations.
    fn reference(x: &[f64], h: &[f64], w: &GruWeights<'_, f64>) -> Vec<f64> {
        let (ni, nh) = (w.input, w.hidden);
        let lin = |m: &[f64], v: &[f64], j: usize, cols: usize| -> f64 { (0..cols).map(|k| m[j * cols + k] * v[k]).sum() };
        let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
        let z: Vec<f64> = (0..nh).map(|j| sig(lin(w.w_z, x, j, ni) + lin(w.u_z, h, j, nh) + w.b_z[j])).collect();
        let r: Vec<f64> = (0..nh).map(|j| sig(lin(w.w_r, x, j, ni) + lin(w.u_r, h, j, nh) + w.b_r[j])).collect();
        let rh: Vec<f64> = (0..nh).map(|j| r[j] * h[j]).collect();
        let c: Vec<f64> = (0..nh).map(|j| (lin(w.w_h, x, j, ni) + lin(w.u_h, &rh, j, nh) + w.b_h[j]).tanh()).collect();
        (0..nh).map(|j| (1.0 - z[j]) * h[j] + z[j] * c[j]).collect()
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p: Vec<f64> = (0..zeros(6, 4).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = view(6, 4, &p);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-0.99..0.99)).collect();
            for (a, b) in gru_step(&x, &h, &w).iter().zip(reference(&x, &h, &w)) {
                assert!((a - b).abs() < 1e-12);
                assert!(a.abs() < 1.0);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let dims = ModelDims::tiny();
        let layout = ParamLayout::new(&dims, ModelKind::Sequence);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p: Vec<f64> = layout.init(1);
        for v in &mut p {
            *v += rng.random_range(-0.2..0.2);
        }
        let (ni, nh) = (dims.fused_dim(), dims.hidden);
        let x: Vec<f64> = (0..ni).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..nh).map(|_| rng.random_range(-0.9..0.9)).collect();
        let c: Vec<f64> = (0..nh).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |p: &[f64], x: &[f64], h0: &[f64]| -> f64 {
            let w = GruWeights::from_flat(ni, nh, &layout, p);
            gru_step(x, h0, &w).iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let mut g = vec![0.0; layout.len()];
        let w = GruWeights::from_flat(ni, nh, &layout, &p);
        let t = gru_step_traced(&x, &h0, &w);
        let (dx, dh) = gru_step_backward(&t, &c, &w, &mut GruGrads::take(&mut layout.blocks_mut(&mut g)));
        let eps = 1e-6;
        let rel = |fd: f64, an: f64| (fd - an).abs() / (fd.abs() + an.abs()).max(1e-3);
        let gru = layout.range(Block::GruWz).start..layout.range(Block::GruBh).end;
        for i in gru {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += eps;
            b[i] -= eps;
            let fd = (f(&a, &x, &h0) - f(&b, &x, &h0)) / (2.0 * eps);
            assert!(rel(fd, g[i]) < 1e-6, "param {i} ({:?}): fd {fd} analytic {}", layout.block_of(i), g[i]);
        }
        for i in 0..ni {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += eps;
            b[i] -= eps;
            assert!(rel((f(&p, &a, &h0) - f(&p, &b, &h0)) / (2.0 * eps), dx[i]) < 1e-6);
        }
        for i in 0..nh {
            let (mut a, mut b) = (h0.clone(), h0.clone());
            a[i] += eps;
            b[i] -= eps;
            assert!(rel((f(&p, &x, &a) - f(&p, &x, &b)) / (2.0 * eps), dh[i]) < 1e-6);
        }
    }
}
