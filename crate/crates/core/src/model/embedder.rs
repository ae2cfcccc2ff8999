//! Convolutional per-recording embedder.
//!
//! Each log-mel patch goes through two 3x3 "same" convolutions with ReLU and
//! 2x2 max-pooling, is flattened, averaged over the recording's patches and
//! linearly projected to `embed` dimensions. Because the projection is
//! affine, averaging the flattened features first is the same as averaging
//! the per-patch projections.

use super::params::{ModelDims, ParamLayout};
use super::ModelError;
use crate::audio::MelPatch;
use crate::scalar::{add_outer, add_transpose_mul, affine, axpy, dot, Real};

#[derive(Debug, Clone, Copy)]
pub struct EmbedderWeights<'a, T> {
    pub dims: ModelDims,
    pub conv1_w: &'a [T],
    pub conv1_b: &'a [T],
    pub conv2_w: &'a [T],
    pub conv2_b: &'a [T],
    pub proj_w: &'a [T],
    pub proj_b: &'a [T],
}

impl<'a, T: Real> EmbedderWeights<'a, T> {
    pub fn from_flat(dims: ModelDims, layout: &ParamLayout, p: &'a [T]) -> Self {
        use super::params::Block::*;
        Self {
            dims,
            conv1_w: &p[layout.range(Conv1W)],
            conv1_b: &p[layout.range(Conv1B)],
            conv2_w: &p[layout.range(Conv2W)],
            conv2_b: &p[layout.range(Conv2B)],
            proj_w: &p[layout.range(ProjW)],
            proj_b: &p[layout.range(ProjB)],
        }
    }
}

impl<'a, T> EmbedderGrads<'a, T> {
    pub fn take(slices: &mut super::params::BlockSlices<'a, T>) -> Self {
        use super::params::Block::*;
        Self {
            conv1_w: slices.take(Conv1W),
            conv1_b: slices.take(Conv1B),
            conv2_w: slices.take(Conv2W),
            conv2_b: slices.take(Conv2B),
            proj_w: slices.take(ProjW),
            proj_b: slices.take(ProjB),
        }
    }
}

pub struct EmbedderGrads<'a, T> {
    pub conv1_w: &'a mut [T],
    pub conv1_b: &'a mut [T],
    pub conv2_w: &'a mut [T],
    pub conv2_b: &'a mut [T],
    pub proj_w: &'a mut [T],
    pub proj_b: &'a mut [T],
}

/// Activations of one patch kept for backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTrace<T> {
    input: Vec<T>,
    relu1: Vec<T>,
    arg1: Vec<u32>,
    pool1: Vec<T>,
    relu2: Vec<T>,
    arg2: Vec<u32>,
}

/// Trace of one recording: per-patch activations and the mean flattened
/// feature that feeds the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTrace<T> {
    patches: Vec<PatchTrace<T>>,
    pub mean_features: Vec<T>,
}

fn conv3x3_forward<T: Real>(input: &[T], cin: usize, h: usize, w: usize, weight: &[T], bias: &[T], out: &mut [T]) {
    let plane = h * w;
    for (co, o) in out.chunks_exact_mut(plane).enumerate() {
        o.fill(bias[co]);
        for ci in 0..cin {
            let inp = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = (usize::from(ky == 0), if ky == 2 { h - 1 } else { h });
                for kx in 0..3 {
                    let wv = weight[((co * cin + ci) * 3 + ky) * 3 + kx];
                    let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        axpy(wv, &inp[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1], &mut o[y * w + x0..y * w + x1]);
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and, when `d_input` is given, the
/// input gradient of a 3x3 "same" convolution.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<T: Real>(
    input: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    mut d_input: Option<&mut [T]>,
) {
    let plane = h * w;
    for (co, go) in d_out.chunks_exact(plane).enumerate() {
        d_bias[co] += go.iter().copied().sum::<T>();
        for ci in 0..cin {
            let inp = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                let (y0, y1) = (usize::from(ky == 0), if ky == 2 { h - 1 } else { h });
                for kx in 0..3 {
                    let widx = ((co * cin + ci) * 3 + ky) * 3 + kx;
                    let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        acc += dot(&go[y * w + x0..y * w + x1], &inp[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1]);
                    }
                    d_weight[widx] += acc;
                    if let Some(di) = d_input.as_deref_mut() {
                        let wv = weight[widx];
                        let di = &mut di[ci * plane..(ci + 1) * plane];
                        for y in y0..y1 {
                            let iy = y + ky - 1;
                            axpy(wv, &go[y * w + x0..y * w + x1], &mut di[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1]);
                        }
                    }
                }
            }
        }
    }
}

fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// 2x2 stride-2 max pooling (odd edges dropped); returns pooled values and
/// the flat argmax index of each output.
fn max_pool2<T: Real>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

fn patch_forward<T: Real>(patch: &[T], wts: &EmbedderWeights<'_, T>) -> PatchTrace<T> {
    let d = &wts.dims;
    let (h, w) = (d.patch_frames, d.n_mels);
    assert_eq!(patch.len(), h * w, "patch shape does not match the embedder");
    let mut relu1 = vec![T::zero(); d.conv1 * h * w];
    conv3x3_forward(patch, 1, h, w, wts.conv1_w, wts.conv1_b, &mut relu1);
    relu_in_place(&mut relu1);
    let (pool1, arg1) = max_pool2(&relu1, d.conv1, h, w);
    let (h1, w1) = d.pooled1();
    let mut relu2 = vec![T::zero(); d.conv2 * h1 * w1];
    conv3x3_forward(&pool1, d.conv1, h1, w1, wts.conv2_w, wts.conv2_b, &mut relu2);
    relu_in_place(&mut relu2);
    let (_, arg2) = max_pool2(&relu2, d.conv2, h1, w1);
    PatchTrace { input: patch.to_vec(), relu1, arg1, pool1, relu2, arg2 }
}

impl<T: Real> PatchTrace<T> {
    fn features(&self) -> impl Iterator<Item = T> + '_ {
        self.arg2.iter().map(|&i| self.relu2[i as usize])
    }
}

/// Flattened conv features of one patch.
pub fn conv_features<T: Real>(patch: &MelPatch<T>, wts: &EmbedderWeights<'_, T>) -> Vec<T> {
    patch_forward(&patch.values, wts).features().collect()
}

/// Mean flattened conv features over a recording's patches.
pub fn mean_conv_features<T: Real>(patches: &[MelPatch<T>], wts: &EmbedderWeights<'_, T>) -> Vec<T> {
    assert!(!patches.is_empty(), "a recording needs at least one patch");
    let mut acc = vec![T::zero(); wts.dims.flat_dim()];
    for p in patches {
        for (a, f) in acc.iter_mut().zip(conv_features(p, wts)) {
            *a += f;
        }
    }
    let inv = T::one() / T::from_usize_lossy(patches.len());
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

/// Affine projection of (mean) conv features to the embedding.
pub fn project<T: Real>(features: &[T], wts: &EmbedderWeights<'_, T>) -> Vec<T> {
    let mut e = vec![T::zero(); wts.dims.embed];
    affine(wts.proj_w, features, wts.proj_b, &mut e);
    e
}

/// Embeds one recording: mean over its patches of the projected features.
pub fn embed_recording<T: Real>(patches: &[MelPatch<T>], wts: &EmbedderWeights<'_, T>) -> Vec<T> {
    project(&mean_conv_features(patches, wts), wts)
}

pub fn embed_with_trace<T: Real>(patches: &[MelPatch<T>], wts: &EmbedderWeights<'_, T>) -> (Vec<T>, ClipTrace<T>) {
    assert!(!patches.is_empty(), "a recording needs at least one patch");
    let traces: Vec<PatchTrace<T>> = patches.iter().map(|p| patch_forward(&p.values, wts)).collect();
    let mut mean = vec![T::zero(); wts.dims.flat_dim()];
    for t in &traces {
        for (m, f) in mean.iter_mut().zip(t.features()) {
            *m += f;
        }
    }
    let inv = T::one() / T::from_usize_lossy(traces.len());
    mean.iter_mut().for_each(|m| *m *= inv);
    let e = project(&mean, wts);
    (e, ClipTrace { patches: traces, mean_features: mean })
}

/// Backpropagates `d_embedding` into the projection and, if `train_conv`,
/// through both convolution stages.
pub fn embed_backward<T: Real>(
    trace: &ClipTrace<T>,
    d_embedding: &[T],
    wts: &EmbedderWeights<'_, T>,
    grads: &mut EmbedderGrads<'_, T>,
    train_conv: bool,
) {
    project_backward(&trace.mean_features, d_embedding, grads);
    if !train_conv {
        return;
    }
    let d = &wts.dims;
    let mut d_feat = vec![T::zero(); d.flat_dim()];
    add_transpose_mul(wts.proj_w, d_embedding, &mut d_feat);
    let inv = T::one() / T::from_usize_lossy(trace.patches.len());
    d_feat.iter_mut().for_each(|g| *g *= inv);
    let (h, w) = (d.patch_frames, d.n_mels);
    let (h1, w1) = d.pooled1();
    for pt in &trace.patches {
        let mut d_relu2 = vec![T::zero(); pt.relu2.len()];
        for (&idx, &g) in pt.arg2.iter().zip(&d_feat) {
            if pt.relu2[idx as usize] > T::zero() {
                d_relu2[idx as usize] += g;
            }
        }
        let mut d_pool1 = vec![T::zero(); pt.pool1.len()];
        conv3x3_backward(&pt.pool1, d.conv1, h1, w1, wts.conv2_w, &d_relu2, grads.conv2_w, grads.conv2_b, Some(&mut d_pool1));
        let mut d_relu1 = vec![T::zero(); pt.relu1.len()];
        for (&idx, &g) in pt.arg1.iter().zip(&d_pool1) {
            if pt.relu1[idx as usize] > T::zero() {
                d_relu1[idx as usize] += g;
            }
        }
        conv3x3_backward(&pt.input, 1, h, w, wts.conv1_w, &d_relu1, grads.conv1_w, grads.conv1_b, None);
    }
}

/// Projection-only gradient from cached mean features.
pub fn project_backward<T: Real>(mean_features: &[T], d_embedding: &[T], grads: &mut EmbedderGrads<'_, T>) {
    add_outer(d_embedding, mean_features, grads.proj_w);
    for (b, &g) in grads.proj_b.iter_mut().zip(d_embedding) {
        *b += g;
    }
}

/// Concatenates breath, cough and voice embeddings in that order.
pub fn fuse_modalities<T: Real>(breath: &[T], cough: &[T], voice: &[T], embed: usize) -> Result<Vec<T>, ModelError> {
    for e in [breath, cough, voice] {
        if e.len() != embed {
            return Err(ModelError::DimensionMismatch { expected: embed, got: e.len() });
        }
    }
    let mut v = Vec::with_capacity(3 * embed);
    v.extend_from_slice(breath);
    v.extend_from_slice(cough);
    v.extend_from_slice(voice);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{Block, ModelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(dims: &ModelDims, rng: &mut ChaCha8Rng) -> MelPatch<f64> {
        MelPatch { values: (0..dims.patch_frames * dims.n_mels).map(|_| rng.random_range(-2.0..2.0)).collect(), n_mels: dims.n_mels }
    }

    #[test]
    fn zero_input_and_bias_give_zero_embedding() {
        let dims = ModelDims::default();
        let layout = ParamLayout::new(&dims, ModelKind::Sequence);
        let p: Vec<f64> = layout.init(1);
        let w = EmbedderWeights::from_flat(dims, &layout, &p);
        let zero = MelPatch { values: vec![0.0; 96 * 64], n_mels: 64 };
        assert!(embed_recording(&[zero.clone(), zero], &w).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_patch_list_gives_same_embedding() {
        let dims = ModelDims::tiny();
        let layout = ParamLayout::new(&dims, ModelKind::Sequence);
        let p: Vec<f64> = layout.init(2);
        let w = EmbedderWeights::from_flat(dims, &layout, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_patch(&dims, &mut rng);
        let b = random_patch(&dims, &mut rng);
        let once = embed_recording(&[a.clone(), b.clone()], &w);
        let twice = embed_recording(&[a.clone(), b.clone(), a, b], &w);
        for (x, y) in once.iter().zip(&twice) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    /// Central differences of `sum(c . embedding)` against the analytic
    /// gradient for every embedder parameter.
    #[test]
    fn embedder_gradient_matches_finite_differences() {
        let dims = ModelDims::tiny();
        let layout = ParamLayout::new(&dims, ModelKind::Sequence);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p: Vec<f64> = layout.init(3);
        for i in layout.embedder_range() {
            p[i] += rng.random_range(-0.1..0.1);
        }
        let patch = random_patch(&dims, &mut rng);
        let c: Vec<f64> = (0..dims.embed).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |params: &[f64]| -> f64 {
            let w = EmbedderWeights::from_flat(dims, &layout, params);
            dot(&embed_recording(std::slice::from_ref(&patch), &w), &c)
        };
        let mut g = vec![0.0; layout.len()];
        {
            let w = EmbedderWeights::from_flat(dims, &layout, &p);
            let (_, trace) = embed_with_trace(std::slice::from_ref(&patch), &w);
            let mut grads = EmbedderGrads::take(&mut layout.blocks_mut(&mut g));
            embed_backward(&trace, &c, &w, &mut grads, true);
        }
        let eps = 1e-5;
        let mut worst = 0.0f64;
        for i in layout.embedder_range() {
            let mut q = p.clone();
            q[i] = p[i] + eps;
            let up = objective(&q);
            q[i] = p[i] - eps;
            let down = objective(&q);
            let fd = (up - down) / (2.0 * eps);
            let rel = (fd - g[i]).abs() / (fd.abs() + g[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
        assert!(g[layout.range(Block::Conv1W)].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn fusion_is_ordered_concatenation() {
        let unit = |i: usize| -> Vec<f64> { (0..128).map(|k| if k == i { 1.0 } else { 0.0 }).collect() };
        let v = fuse_modalities(&unit(3), &unit(7), &unit(9), 128).unwrap();
        let nz: Vec<usize> = (0..384).filter(|&k| v[k] != 0.0).collect();
        assert_eq!(nz, vec![3, 135, 265]);
        let z = fuse_modalities(&unit(3), &unit(7), &[0.0; 128], 128).unwrap();
        assert!(z[256..].iter().all(|&x| x == 0.0));
        assert!(fuse_modalities(&unit(0), &unit(0), &[0.0; 64], 128).is_err());
    }
}
