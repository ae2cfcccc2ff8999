//! Versioned binary checkpoint: `LTRK` magic, format version, model kind and
//! dimensions, then little-endian `f64` parameters and Adam state.

use std::fs;
use std::path::Path;

use super::adam::AdamState;
use super::params::{ModelDims, ModelKind};
use super::{ModelError, ModelParams};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"LTRK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: ModelParams<T>,
    pub adam: AdamState<T>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(model: ModelParams<T>, lr: f64) -> Self {
        let adam = AdamState::new(model.params.len(), lr);
        Self { model, adam }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let d = &m.dims;
        let n = m.params.len();
        let mut out = Vec::with_capacity(96 + 24 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&m.kind.code().to_le_bytes());
        for v in [d.patch_frames, d.n_mels, d.conv1, d.conv2, d.embed, d.hidden, d.n_languages] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&m.lambda_rev.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        let put = |out: &mut Vec<u8>, xs: &[T]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_f64_lossy().to_le_bytes()));
        put(&mut out, &m.params);
        let a = &self.adam;
        out.extend_from_slice(&a.step.to_le_bytes());
        for h in [a.lr, a.beta1, a.beta2, a.eps] {
            out.extend_from_slice(&h.to_le_bytes());
        }
        put(&mut out, &a.m);
        put(&mut out, &a.v);
        out
    }

    /// Parses a checkpoint; when `expected` is given, the stored kind and
    /// dimensions must match it.
    pub fn from_bytes(bytes: &[u8], expected: Option<(ModelDims, ModelKind)>) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let kind = ModelKind::from_code(r.u32()?).ok_or_else(|| corrupt("unknown model kind"))?;
        let mut dv = [0usize; 7];
        for v in &mut dv {
            *v = r.u32()? as usize;
        }
        let dims = ModelDims { patch_frames: dv[0], n_mels: dv[1], conv1: dv[2], conv2: dv[3], embed: dv[4], hidden: dv[5], n_languages: dv[6] };
        dims.validate().map_err(corrupt)?;
        if let Some((ed, ek)) = expected {
            if ed != dims || ek != kind {
                return Err(corrupt(format!("checkpoint holds {kind:?} {dims:?}, expected {ek:?} {ed:?}")));
            }
        }
        let lambda_rev = r.f64()?;
        let n = r.u64()? as usize;
        let expected_len = super::ParamLayout::new(&dims, kind).len();
        if n != expected_len {
            return Err(corrupt(format!("{n} parameters stored, layout needs {expected_len}")));
        }
        let params = r.array(n)?;
        let step = r.u64()?;
        let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let m = r.array(n)?;
        let v = r.array(n)?;
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        let model = ModelParams::from_parts(dims, kind, lambda_rev, params)?;
        Ok(Self { model, adam: AdamState { step, lr, beta1, beta2, eps, m, v } })
    }
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptCheckpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn array<T: Real>(&mut self, n: usize) -> Result<Vec<T>, ModelError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap()))).collect())
    }
}

pub fn save_checkpoint<T: Real>(ck: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, ck.to_bytes()).map_err(ModelError::Io)
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>, expected: Option<(ModelDims, ModelKind)>) -> Result<Checkpoint<T>, ModelError> {
    let bytes = fs::read(path).map_err(ModelError::Io)?;
    Checkpoint::from_bytes(&bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<f64> {
        let dims = ModelDims::tiny();
        let model = ModelParams::init(dims, ModelKind::Sequence, 0.7, 42);
        let mut ck = Checkpoint::new(model, 1e-3);
        let g: Vec<f64> = (0..ck.model.params.len()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        ck.adam.update(&mut ck.model.params, &g);
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ltrk");
        save_checkpoint(&ck, &path).unwrap();
        let back: Checkpoint<f64> = load_checkpoint(&path, Some((ck.model.dims, ModelKind::Sequence))).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
        let as32: Checkpoint<f32> = Checkpoint::from_bytes(&ck.to_bytes(), None).unwrap();
        let again: Checkpoint<f32> = Checkpoint::from_bytes(&as32.to_bytes(), None).unwrap();
        assert_eq!(again, as32);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes[..cut], None), Err(ModelError::CorruptCheckpoint(_))));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bad, None), Err(ModelError::CorruptCheckpoint(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bad, None), Err(ModelError::CorruptCheckpoint(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::<f64>::from_bytes(&long, None).is_err());
        let other = ModelDims { hidden: 5, ..ModelDims::tiny() };
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes, Some((other, ModelKind::Sequence))), Err(ModelError::CorruptCheckpoint(_))));
        assert!(Checkpoint::<f64>::from_bytes(&bytes, Some((ModelDims::tiny(), ModelKind::BaselineSingle))).is_err());
    }
}
