use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// Architecture sizes shared by the sequential model and the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub patch_frames: usize,
    pub n_mels: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Auxiliary language classes; 0 removes the language head.
    pub n_languages: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self { patch_frames: 96, n_mels: 64, conv1: 8, conv2: 16, embed: 128, hidden: 64, n_languages: 8 }
    }
}

impl ModelDims {
    /// Small configuration used for gradient checks.
    pub fn tiny() -> Self {
        Self { patch_frames: 8, n_mels: 8, conv1: 8, conv2: 16, embed: 8, hidden: 4, n_languages: 8 }
    }

    pub fn pooled1(&self) -> (usize, usize) {
        (self.patch_frames / 2, self.n_mels / 2)
    }

    pub fn pooled2(&self) -> (usize, usize) {
        (self.patch_frames / 4, self.n_mels / 4)
    }

    /// Length of the flattened conv feature vector.
    pub fn flat_dim(&self) -> usize {
        let (h, w) = self.pooled2();
        self.conv2 * h * w
    }

    pub fn fused_dim(&self) -> usize {
        3 * self.embed
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.patch_frames < 4 || self.n_mels < 4 {
            return Err("patches must be at least 4x4".into());
        }
        if [self.conv1, self.conv2, self.embed, self.hidden].contains(&0) {
            return Err("layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// Named parameter blocks, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Conv1W,
    Conv1B,
    Conv2W,
    Conv2B,
    ProjW,
    ProjB,
    GruWz,
    GruUz,
    GruBz,
    GruWr,
    GruUr,
    GruBr,
    GruWh,
    GruUh,
    GruBh,
    DiseaseW,
    DiseaseB,
    LangW,
    LangB,
    HeadW,
    HeadB,
}

const N_BLOCKS: usize = 21;

impl Block {
    pub const EMBEDDER: [Block; 6] = [Block::Conv1W, Block::Conv1B, Block::Conv2W, Block::Conv2B, Block::ProjW, Block::ProjB];
    pub const CONV: [Block; 4] = [Block::Conv1W, Block::Conv1B, Block::Conv2W, Block::Conv2B];

    pub fn name(self) -> &'static str {
        match self {
            Block::Conv1W => "conv1.weight",
            Block::Conv1B => "conv1.bias",
            Block::Conv2W => "conv2.weight",
            Block::Conv2B => "conv2.bias",
            Block::ProjW => "proj.weight",
            Block::ProjB => "proj.bias",
            Block::GruWz => "gru.w_z",
            Block::GruUz => "gru.u_z",
            Block::GruBz => "gru.b_z",
            Block::GruWr => "gru.w_r",
            Block::GruUr => "gru.u_r",
            Block::GruBr => "gru.b_r",
            Block::GruWh => "gru.w_h",
            Block::GruUh => "gru.u_h",
            Block::GruBh => "gru.b_h",
            Block::DiseaseW => "disease.weight",
            Block::DiseaseB => "disease.bias",
            Block::LangW => "language.weight",
            Block::LangB => "language.bias",
            Block::HeadW => "head.weight",
            Block::HeadB => "head.bias",
        }
    }

    pub fn is_bias(self) -> bool {
        self.name().ends_with("bias") || matches!(self, Block::GruBz | Block::GruBr | Block::GruBh)
    }
}

/// Which network a flat parameter vector describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Sequence,
    BaselineSingle,
    BaselineAverage,
}

impl ModelKind {
    pub fn code(self) -> u32 {
        match self {
            ModelKind::Sequence => 0,
            ModelKind::BaselineSingle => 1,
            ModelKind::BaselineAverage => 2,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        [ModelKind::Sequence, ModelKind::BaselineSingle, ModelKind::BaselineAverage].into_iter().find(|k| k.code() == c)
    }
}

/// Offsets of every block inside a flat parameter vector, plus the fan-in and
/// fan-out used for initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    ranges: [Option<Range<usize>>; N_BLOCKS],
    fans: [(usize, usize); N_BLOCKS],
    order: Vec<Block>,
    len: usize,
}

impl ParamLayout {
    pub fn new(dims: &ModelDims, kind: ModelKind) -> Self {
        let d = dims;
        let (i, h) = (d.fused_dim(), d.hidden);
        let mut blocks: Vec<(Block, usize, (usize, usize))> = vec![
            (Block::Conv1W, d.conv1 * 9, (9, d.conv1 * 9)),
            (Block::Conv1B, d.conv1, (0, 0)),
            (Block::Conv2W, d.conv2 * d.conv1 * 9, (d.conv1 * 9, d.conv2 * 9)),
            (Block::Conv2B, d.conv2, (0, 0)),
            (Block::ProjW, d.embed * d.flat_dim(), (d.flat_dim(), d.embed)),
            (Block::ProjB, d.embed, (0, 0)),
        ];
        match kind {
            ModelKind::Sequence => {
                for (w, u, b) in [
                    (Block::GruWz, Block::GruUz, Block::GruBz),
                    (Block::GruWr, Block::GruUr, Block::GruBr),
                    (Block::GruWh, Block::GruUh, Block::GruBh),
                ] {
                    blocks.push((w, h * i, (i, h)));
                    blocks.push((u, h * h, (h, h)));
                    blocks.push((b, h, (0, 0)));
                }
                blocks.push((Block::DiseaseW, h, (h, 1)));
                blocks.push((Block::DiseaseB, 1, (0, 0)));
                if d.n_languages > 0 {
                    blocks.push((Block::LangW, d.n_languages * h, (h, d.n_languages)));
                    blocks.push((Block::LangB, d.n_languages, (0, 0)));
                }
            }
            ModelKind::BaselineSingle | ModelKind::BaselineAverage => {
                blocks.push((Block::HeadW, i, (i, 1)));
                blocks.push((Block::HeadB, 1, (0, 0)));
            }
        }
        let mut ranges: [Option<Range<usize>>; N_BLOCKS] = Default::default();
        let mut fans = [(0, 0); N_BLOCKS];
        let mut off = 0;
        let mut order = Vec::with_capacity(blocks.len());
        for (b, n, fan) in blocks {
            ranges[b as usize] = Some(off..off + n);
            fans[b as usize] = fan;
            order.push(b);
            off += n;
        }
        Self { ranges, fans, order, len: off }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.order
    }

    pub fn has(&self, b: Block) -> bool {
        self.ranges[b as usize].is_some()
    }

    pub fn range(&self, b: Block) -> Range<usize> {
        self.ranges[b as usize].clone().unwrap_or_else(|| panic!("{} not in layout", b.name()))
    }

    /// Flat range covering the embedder blocks (always the leading blocks).
    pub fn embedder_range(&self) -> Range<usize> {
        0..self.range(Block::ProjB).end
    }

    pub fn conv_range(&self) -> Range<usize> {
        0..self.range(Block::Conv2B).end
    }

    pub fn block_of(&self, index: usize) -> Option<Block> {
        self.order.iter().copied().find(|&b| self.range(b).contains(&index))
    }

    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn init<T: Real>(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![T::zero(); self.len];
        for &b in &self.order {
            if b.is_bias() {
                continue;
            }
            let (fan_in, fan_out) = self.fans[b as usize];
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut out[self.range(b)] {
                *v = T::lit(rng.random_range(-limit..limit));
            }
        }
        out
    }

    /// Splits a flat vector into named mutable block slices.
    pub fn blocks_mut<'a, T>(&self, data: &'a mut [T]) -> BlockSlices<'a, T> {
        let mut slots: [Option<&'a mut [T]>; N_BLOCKS] = Default::default();
        for (b, s) in self.order.iter().zip(self.split_mut(data)) {
            slots[*b as usize] = Some(s);
        }
        BlockSlices { slots }
    }

    /// Splits a flat vector into per-block mutable slices, in storage order.
    pub fn split_mut<'a, T>(&self, mut data: &'a mut [T]) -> Vec<&'a mut [T]> {
        assert_eq!(data.len(), self.len);
        let mut out = Vec::with_capacity(self.order.len());
        for &b in &self.order {
            let (head, tail) = data.split_at_mut(self.range(b).len());
            out.push(head);
            data = tail;
        }
        out
    }
}

pub struct BlockSlices<'a, T> {
    slots: [Option<&'a mut [T]>; N_BLOCKS],
}

impl<'a, T> BlockSlices<'a, T> {
    /// Moves a block's slice out; panics if absent or already taken.
    pub fn take(&mut self, b: Block) -> &'a mut [T] {
        self.slots[b as usize].take().unwrap_or_else(|| panic!("{} unavailable", b.name()))
    }

    pub fn try_take(&mut self, b: Block) -> Option<&'a mut [T]> {
        self.slots[b as usize].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous_and_ordered() {
        let l = ParamLayout::new(&ModelDims::default(), ModelKind::Sequence);
        let mut end = 0;
        for &b in l.blocks() {
            assert_eq!(l.range(b).start, end);
            end = l.range(b).end;
        }
        assert_eq!(end, l.len());
        assert_eq!(l.range(Block::ProjW).len(), 128 * 6144);
        assert_eq!(l.range(Block::GruWz).len(), 64 * 384);
        assert!(!l.has(Block::HeadW));
        let b = ParamLayout::new(&ModelDims::default(), ModelKind::BaselineAverage);
        assert_eq!(b.range(Block::HeadW).len(), 384);
        let nolang = ParamLayout::new(&ModelDims { n_languages: 0, ..ModelDims::default() }, ModelKind::Sequence);
        assert!(!nolang.has(Block::LangW));
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let l = ParamLayout::new(&ModelDims::tiny(), ModelKind::Sequence);
        let a: Vec<f64> = l.init(3);
        assert_eq!(a, l.init::<f64>(3));
        assert_ne!(a, l.init::<f64>(4));
        assert!(a[l.range(Block::GruBz)].iter().all(|&v| v == 0.0));
        let lim = (6.0f64 / (24 + 4) as f64).sqrt();
        assert!(a[l.range(Block::GruWh)].iter().all(|v| v.abs() <= lim));
    }
}
